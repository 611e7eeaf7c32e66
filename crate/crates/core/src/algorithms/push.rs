//! Push-DIGing, the subgradient-push baseline, and the row-stochastic
//! reformulation used to analyse push-sum iterates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::diging::{check_mixing, check_step};
use crate::error::{Error, Result};
use crate::linalg::IterateBlock;
use crate::mixing::{MixingMatrix, StochasticMode};
use crate::objective::ObjectiveSuite;

#[derive(Debug, Clone, PartialEq)]
pub struct PushDigingState {
    pub k: usize,
    pub u: IterateBlock,
    pub v: DVector<f64>,
    pub x: IterateBlock,
    pub y: IterateBlock,
    pub g_prev: IterateBlock,
}

impl PushDigingState {
    /// `u(0) = x(0)`, `v(0) = 1`, `y(0) = ∇f(x(0))`.
    pub fn init(suite: &ObjectiveSuite, x0: IterateBlock) -> Result<Self> {
        let g = suite.block_gradient(&x0)?;
        Ok(Self {
            k: 0,
            u: x0.clone(),
            v: DVector::from_element(x0.nrows(), 1.0),
            x: x0,
            y: g.clone(),
            g_prev: g,
        })
    }

    /// `h = V⁻¹y`.
    pub fn h(&self) -> IterateBlock {
        scale_rows_inv(&self.y, &self.v)
    }
}

fn scale_rows_inv(m: &IterateBlock, v: &DVector<f64>) -> IterateBlock {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row /= v[i];
    }
    out
}

/// `v' = Cv` with a positivity check; `k` is the index of the new weights.
fn push_weights(c: &DMatrix<f64>, v: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
    let v_next = c * v;
    if let Some((agent, &value)) = v_next.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::DegenerateWeight { k, agent, value });
    }
    Ok(v_next)
}

/// `u' = C(u - αy)`, `v' = Cv`, `x' = u'/v'`, `y' = Cy + ∇f(x') - ∇f(x)`.
pub fn push_diging_step(
    state: &PushDigingState,
    c: &MixingMatrix,
    suite: &ObjectiveSuite,
    alpha: f64,
) -> Result<PushDigingState> {
    check_step(alpha)?;
    check_mixing(c, state.x.nrows(), StochasticMode::Column)?;
    let m = c.matrix();
    let u = m * (&state.u - &state.y * alpha);
    let v = push_weights(m, &state.v, state.k + 1)?;
    let x = scale_rows_inv(&u, &v);
    let g = suite.block_gradient(&x)?;
    let y = m * &state.y + &g - &state.g_prev;
    Ok(PushDigingState {
        k: state.k + 1,
        u,
        v,
        x,
        y,
        g_prev: g,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushSumState {
    pub k: usize,
    pub u: IterateBlock,
    pub v: DVector<f64>,
    pub x: IterateBlock,
}

impl PushSumState {
    pub fn init(x0: IterateBlock) -> Self {
        Self {
            k: 0,
            u: x0.clone(),
            v: DVector::from_element(x0.nrows(), 1.0),
            x: x0,
        }
    }
}

/// Diminishing step rule for subgradient-push.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `a/√(k+1)`: the classical `a/√k` shifted so the first step is `a`.
    InvSqrt { a: f64 },
}

impl StepSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::InvSqrt { a } => a / ((k + 1) as f64).sqrt(),
        }
    }
}

/// `u' = C(u - α_k ∇f(x))`, `v' = Cv`, `x' = u'/v'`.
pub fn subgradient_push_step(
    state: &PushSumState,
    c: &MixingMatrix,
    suite: &ObjectiveSuite,
    alpha_k: f64,
) -> Result<PushSumState> {
    check_step(alpha_k)?;
    check_mixing(c, state.x.nrows(), StochasticMode::Column)?;
    let m = c.matrix();
    let g = suite.block_gradient(&state.x)?;
    let u = m * (&state.u - g * alpha_k);
    let v = push_weights(m, &state.v, state.k + 1)?;
    let x = scale_rows_inv(&u, &v);
    Ok(PushSumState {
        k: state.k + 1,
        u,
        v,
        x,
    })
}

/// `R̃(k) = V(k+1)⁻¹ C(k) V(k)`, i.e. `R̃_ij = C_ij v_j(k) / v_i(k+1)`.
pub fn equivalent_mixing(c: &DMatrix<f64>, v: &DVector<f64>, v_next: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] * v[j] / v_next[i])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    /// Max entrywise gap between recorded `x`, `h` and their recomputation.
    pub max_deviation: f64,
    /// Max `|Σ_j R̃_ij(k) - 1|` over all recorded steps.
    pub row_sum_deviation: f64,
}

/// Replays a recorded Push-DIGing run through
/// `x(k+1) = R̃(k)(x(k) - αh(k))` and `h(k+1) = R̃(k)h(k) + V(k+1)⁻¹z(k+1)`.
/// `mixing[k]` must be the matrix applied between `history[k]` and `history[k+1]`.
pub fn equivalent_recursion_check(
    history: &[PushDigingState],
    mixing: &[MixingMatrix],
    alpha: f64,
) -> Result<EquivalenceReport> {
    if history.len() < 2 {
        return Err(Error::InvalidArgument("need at least two recorded states".into()));
    }
    if mixing.len() + 1 < history.len() {
        return Err(Error::Dimension(format!(
            "{} states need {} matrices, got {}",
            history.len(),
            history.len() - 1,
            mixing.len()
        )));
    }
    let mut max_deviation = 0.0_f64;
    let mut row_sum_deviation = 0.0_f64;
    for (pair, c) in history.windows(2).zip(mixing) {
        let (s, t) = (&pair[0], &pair[1]);
        let r = equivalent_mixing(c.matrix(), &s.v, &t.v);
        for row in r.row_iter() {
            row_sum_deviation = row_sum_deviation.max((row.sum() - 1.0).abs());
        }
        let h = s.h();
        let x_re = &r * (&s.x - &h * alpha);
        let z = &t.g_prev - &s.g_prev;
        let h_re = &r * &h + scale_rows_inv(&z, &t.v);
        max_deviation = max_deviation
            .max((x_re - &t.x).abs().max())
            .max((h_re - t.h()).abs().max());
    }
    Ok(EquivalenceReport {
        max_deviation,
        row_sum_deviation,
    })
}
