//! Experiment plumbing: traces, configs, rate fits and the Huber reproduction.

pub mod config;
pub mod fit;
pub mod section6;
pub mod trace;

pub use config::{load_config, ExperimentConfig, LoadedConfig};
pub use fit::{rate_fit, segment_fit, RateFit};
pub use section6::{reproduce_section6, Case, StepSizes};
pub use trace::RunTrace;
