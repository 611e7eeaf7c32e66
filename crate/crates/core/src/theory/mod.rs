//! Closed-form rate bounds and small-gain diagnostics.

pub mod bounds;
pub mod gains;
pub mod logspace;
pub mod params;

pub use bounds::{
    corollary_metropolis, corollary_scalability, diging_rate, diging_step_size_window, j1, j2, j2_and_push_rate,
    push_step_size_window, pushsum_constants, pushsum_delta, rate_for_gain, window_for_gain, PushRate,
    PushSumConstants, RateBound, RateBranch, Scalability, StepWindow, LAMBDA_CEILING,
};
pub use gains::{
    audit_arrows, igd_bound_rhs, igd_conditions, ln_weighted_ergodic_norm, small_gain_bound, weighted_ergodic_norm,
    ArrowCheck, AuditSetup, GainLedger,
};
pub use logspace::LogScalar;
pub use params::{bounds_report, BoundsReport, DeltaSource, TheoryParams};
