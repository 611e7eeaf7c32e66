use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible size: {0}")]
    InfeasibleSize(String),

    #[error("graph kind mismatch: expected {expected}, got {got}")]
    KindMismatch { expected: String, got: String },

    #[error("mixing matrix is not {mode} stochastic: {detail}")]
    NotStochastic { mode: String, detail: String },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last})")]
    NoConvergence { iterations: usize, last: f64 },

    #[error("push-sum weight degenerated at iteration {k}: v[{agent}] = {value:e}")]
    DegenerateWeight { k: usize, agent: usize, value: f64 },

    #[error("no rate guarantee: {0}")]
    NoGuarantee(String),

    #[error("step size {alpha} outside the admissible window (0, {alpha_max}]")]
    StepOutOfWindow { alpha: f64, alpha_max: f64 },

    #[error("small-gain theorem inapplicable: gain product {0} >= 1")]
    GainProduct(f64),

    #[error("iteration cap {0} exceeded")]
    IterationCap(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for the CLI: 2 parse, 3 validation, 4 numerical, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Json(_) | Error::Csv(_) => 2,
            Error::Validation(_)
            | Error::Dimension(_)
            | Error::InvalidArgument(_)
            | Error::InfeasibleSize(_)
            | Error::KindMismatch { .. }
            | Error::NotStochastic { .. } => 3,
            Error::NoConvergence { .. }
            | Error::DegenerateWeight { .. }
            | Error::NoGuarantee(_)
            | Error::StepOutOfWindow { .. }
            | Error::GainProduct(_)
            | Error::IterationCap(_) => 4,
            Error::Io(_) => 5,
        }
    }
}
