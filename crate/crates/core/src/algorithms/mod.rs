//! Iteration engines. Each step is a pure function from a state to the next state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub mod diging;
pub mod igd;
pub mod push;
pub mod run;

pub use diging::{dgd_step, diging_atc_step, diging_step, DgdState, DigingState};
pub use igd::{igd_step, IgdState, Perturbation};
pub use push::{
    equivalent_mixing, equivalent_recursion_check, push_diging_step, subgradient_push_step, EquivalenceReport,
    PushDigingState, PushSumState, StepSchedule,
};
pub use run::{run, weight_floor, RunSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Diging,
    DigingAtc,
    PushDiging,
    SubgradientPush,
    Dgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Diging,
        Algorithm::DigingAtc,
        Algorithm::PushDiging,
        Algorithm::SubgradientPush,
        Algorithm::Dgd,
    ];

    /// Maintains a gradient-tracking variable `y`.
    pub fn is_tracking(self) -> bool {
        matches!(self, Algorithm::Diging | Algorithm::DigingAtc | Algorithm::PushDiging)
    }

    /// Uses push-sum weights and column stochastic mixing.
    pub fn is_push(self) -> bool {
        matches!(self, Algorithm::PushDiging | Algorithm::SubgradientPush)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Diging => "diging",
            Algorithm::DigingAtc => "diging-atc",
            Algorithm::PushDiging => "push-diging",
            Algorithm::SubgradientPush => "subgradient-push",
            Algorithm::Dgd => "dgd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown algorithm `{s}`")))
    }
}
