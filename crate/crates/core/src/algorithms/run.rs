//! Experiment driver: iterate one algorithm over a graph sequence and record metrics.

use nalgebra::DVector;

use super::diging::{dgd_step, diging_atc_step, diging_step, DgdState, DigingState};
use super::push::{push_diging_step, subgradient_push_step, PushDigingState, PushSumState, StepSchedule};
use super::Algorithm;
use crate::error::{Error, Result};
use crate::graph::GraphSequence;
use crate::harness::trace::{RunMeta, RunTrace, SeriesRow, TraceRow};
use crate::linalg::{column_sums, consensus_norm, consensual, row_mean, IterateBlock};
use crate::mixing::Weights;
use crate::objective::ObjectiveSuite;

pub struct RunSpec<'a> {
    pub algorithm: Algorithm,
    pub seq: &'a GraphSequence,
    pub weights: &'a Weights,
    pub suite: &'a ObjectiveSuite,
    pub step: StepSchedule,
    pub iterations: usize,
    pub x0: IterateBlock,
    pub x_star: DVector<f64>,
    pub graph_seed: Option<u64>,
    pub problem_seed: Option<u64>,
    /// Contraction factor to record in the metadata for later audits.
    pub delta: Option<f64>,
}

enum State {
    Tracking(DigingState),
    Push(PushDigingState),
    Dgd(DgdState),
    SubPush(PushSumState),
}

impl State {
    fn x(&self) -> &IterateBlock {
        match self {
            State::Tracking(s) => &s.x,
            State::Push(s) => &s.x,
            State::Dgd(s) => &s.x,
            State::SubPush(s) => &s.x,
        }
    }

    fn v(&self) -> Option<&DVector<f64>> {
        match self {
            State::Push(s) => Some(&s.v),
            State::SubPush(s) => Some(&s.v),
            _ => None,
        }
    }
}

/// The smallest admissible push-sum weight: `1e-3 n^{-n B}`.
pub fn weight_floor(n: usize, b_minus: usize) -> f64 {
    1e-3 * (-((n * b_minus) as f64) * (n as f64).ln()).exp()
}

struct Recorder<'a> {
    suite: &'a ObjectiveSuite,
    x_star: IterateBlock,
    q0: f64,
    prev_grad: Option<IterateBlock>,
    rows: Vec<TraceRow>,
    series: Vec<SeriesRow>,
}

impl Recorder<'_> {
    fn record(&mut self, k: usize, state: &State) -> Result<()> {
        let x = state.x();
        let grad = match state {
            State::Tracking(s) => s.g_prev.clone(),
            State::Push(s) => s.g_prev.clone(),
            _ => self.suite.block_gradient(x)?,
        };
        let q = (x - &self.x_star).norm();
        let z = self.prev_grad.as_ref().map_or(0.0, |g| (&grad - g).norm());
        let (y_check, conservation) = match state {
            State::Tracking(s) => (
                Some(consensus_norm(&s.y)),
                Some((column_sums(&s.y) - column_sums(&grad)).norm()),
            ),
            State::Push(s) => (
                Some(consensus_norm(&s.h())),
                Some((column_sums(&s.y) - column_sums(&grad)).norm()),
            ),
            _ => (None, None),
        };
        let x_check = consensus_norm(x);
        self.rows.push(TraceRow {
            k,
            residual: if self.q0 > 0.0 { q / self.q0 } else { q },
            cons_viol_x: x_check,
            cons_viol_y: y_check,
            conservation_err: conservation,
            v_min: state.v().map(|v| v.min()),
        });
        self.series.push(SeriesRow {
            k,
            q,
            z,
            y_check,
            x_check,
        });
        self.prev_grad = Some(grad);
        Ok(())
    }
}

/// Runs `spec.iterations` steps. Failures inside the loop (degenerate
/// push-sum weights, non-finite iterates) stop the run early; the partial
/// trace is returned with `meta.termination` set.
pub fn run(spec: &RunSpec<'_>) -> Result<RunTrace> {
    let (n, p) = (spec.suite.n(), spec.suite.p());
    if spec.seq.n() != n || spec.x0.nrows() != n || spec.x0.ncols() != p || spec.x_star.len() != p {
        return Err(Error::Dimension(format!(
            "graph has {} vertices, suite is {n}x{p}, x0 is {}x{}, x* has length {}",
            spec.seq.n(),
            spec.x0.nrows(),
            spec.x0.ncols(),
            spec.x_star.len()
        )));
    }
    if let Weights::Rule(rule) = spec.weights {
        if let Some(kind) = rule.required_kind() {
            if kind != spec.seq.kind() {
                return Err(Error::KindMismatch {
                    expected: kind.to_string(),
                    got: spec.seq.kind().to_string(),
                });
            }
        }
    }
    let constant = match spec.step {
        StepSchedule::Constant { alpha } => Some(alpha),
        StepSchedule::InvSqrt { .. } => None,
    };
    if spec.algorithm.is_tracking() && constant.is_none() {
        return Err(Error::InvalidArgument(format!(
            "{} needs a constant step size",
            spec.algorithm
        )));
    }

    let x0 = spec.x0.clone();
    let mut state = match spec.algorithm {
        Algorithm::Diging | Algorithm::DigingAtc => State::Tracking(DigingState::init(spec.suite, x0)?),
        Algorithm::PushDiging => State::Push(PushDigingState::init(spec.suite, x0)?),
        Algorithm::Dgd => State::Dgd(DgdState { k: 0, x: x0 }),
        Algorithm::SubgradientPush => State::SubPush(PushSumState::init(x0)),
    };
    let x_star = consensual(n, &spec.x_star);
    let q0 = (&spec.x0 - &x_star).norm();
    let initial_gap = (row_mean(&spec.x0) - &spec.x_star).norm();
    let mut rec = Recorder {
        suite: spec.suite,
        x_star,
        q0,
        prev_grad: None,
        rows: Vec::with_capacity(spec.iterations + 1),
        series: Vec::with_capacity(spec.iterations + 1),
    };
    rec.record(0, &state)?;

    let floor = match (spec.algorithm.is_push(), spec.seq.declared_b()) {
        (true, Some(b)) => weight_floor(n, b),
        _ => 0.0,
    };
    let mut termination = None;
    for k in 0..spec.iterations {
        let w = spec.weights.at(spec.seq, k)?;
        let alpha = spec.step.at(k);
        let next = match &state {
            State::Tracking(s) if spec.algorithm == Algorithm::Diging => diging_step(s, &w, spec.suite, alpha).map(State::Tracking),
            State::Tracking(s) => diging_atc_step(s, &w, spec.suite, alpha).map(State::Tracking),
            State::Push(s) => push_diging_step(s, &w, spec.suite, alpha).map(State::Push),
            State::Dgd(s) => dgd_step(s, &w, spec.suite, alpha).map(State::Dgd),
            State::SubPush(s) => subgradient_push_step(s, &w, spec.suite, alpha).map(State::SubPush),
        };
        state = match next {
            Ok(s) => s,
            Err(e @ (Error::DegenerateWeight { .. } | Error::NotStochastic { .. })) => {
                termination = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(v) = state.v() {
            if let Some((agent, &value)) = v.iter().enumerate().find(|(_, &x)| x < floor) {
                termination = Some(Error::DegenerateWeight { k: k + 1, agent, value }.to_string());
                break;
            }
        }
        if !state.x().iter().all(|v| v.is_finite()) {
            termination = Some(format!("non-finite iterate at k={}", k + 1));
            break;
        }
        rec.record(k + 1, &state)?;
    }

    let meta = RunMeta {
        algorithm: spec.algorithm,
        alpha: match spec.step {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::InvSqrt { a } => a,
        },
        schedule: match spec.step {
            StepSchedule::Constant { .. } => "constant".into(),
            StepSchedule::InvSqrt { .. } => "a/sqrt(k+1)".into(),
        },
        n,
        p,
        iterations: spec.iterations,
        graph: spec.seq.describe(),
        weights: match spec.weights {
            Weights::Rule(r) => r.to_string(),
            Weights::Fixed(m) => format!("fixed {}", m.rule()),
        },
        graph_seed: spec.graph_seed,
        problem_seed: spec.problem_seed,
        constants: spec.suite.constants(),
        initial_gap,
        b: spec.seq.declared_b(),
        delta: spec.delta,
        termination,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    Ok(RunTrace {
        meta,
        rows: rec.rows,
        series: rec.series,
    })
}
