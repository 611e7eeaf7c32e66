//! Deterministic simulation of gradient-tracking methods (DIGing, its
//! adapt-then-combine variant and Push-DIGing) over time-varying graphs,
//! together with evaluators for their geometric rate bounds and small-gain
//! diagnostics.

pub mod algorithms;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod mixing;
pub mod objective;
pub mod theory;

pub use error::{Error, Result};
pub use graph::{GraphKind, GraphSequence, GraphSnapshot};
pub use linalg::IterateBlock;
pub use mixing::{MixingMatrix, MixingRule, Weights};
pub use objective::ObjectiveSuite;
