//! DIGing, its adapt-then-combine ordering, and plain decentralized gradient descent.

use crate::error::{Error, Result};
use crate::linalg::IterateBlock;
use crate::mixing::{MixingMatrix, StochasticMode};
use crate::objective::ObjectiveSuite;

#[derive(Debug, Clone, PartialEq)]
pub struct DigingState {
    pub k: usize,
    pub x: IterateBlock,
    pub y: IterateBlock,
    /// `∇f(x(k))`, reused by the next step.
    pub g_prev: IterateBlock,
}

impl DigingState {
    /// `y(0) = ∇f(x(0))`.
    pub fn init(suite: &ObjectiveSuite, x0: IterateBlock) -> Result<Self> {
        let g = suite.block_gradient(&x0)?;
        Ok(Self {
            k: 0,
            x: x0,
            y: g.clone(),
            g_prev: g,
        })
    }
}

pub(crate) fn check_step(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size {alpha} must be positive")));
    }
    Ok(())
}

pub(crate) fn check_mixing(w: &MixingMatrix, n: usize, mode: StochasticMode) -> Result<()> {
    if w.n() != n {
        return Err(Error::Dimension(format!("mixing matrix is {0}x{0}, iterates have {n} rows", w.n())));
    }
    w.require(mode)
}

/// `x' = Wx - αy`, `y' = Wy + ∇f(x') - ∇f(x)`.
pub fn diging_step(state: &DigingState, w: &MixingMatrix, suite: &ObjectiveSuite, alpha: f64) -> Result<DigingState> {
    check_step(alpha)?;
    check_mixing(w, state.x.nrows(), StochasticMode::Doubly)?;
    let m = w.matrix();
    let x = m * &state.x - &state.y * alpha;
    let g = suite.block_gradient(&x)?;
    let y = m * &state.y + &g - &state.g_prev;
    Ok(DigingState {
        k: state.k + 1,
        x,
        y,
        g_prev: g,
    })
}

/// `x' = W(x - αy)`, `y' = W(y + ∇f(x') - ∇f(x))`.
pub fn diging_atc_step(
    state: &DigingState,
    w: &MixingMatrix,
    suite: &ObjectiveSuite,
    alpha: f64,
) -> Result<DigingState> {
    check_step(alpha)?;
    check_mixing(w, state.x.nrows(), StochasticMode::Doubly)?;
    let m = w.matrix();
    let x = m * (&state.x - &state.y * alpha);
    let g = suite.block_gradient(&x)?;
    let y = m * (&state.y + &g - &state.g_prev);
    Ok(DigingState {
        k: state.k + 1,
        x,
        y,
        g_prev: g,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgdState {
    pub k: usize,
    pub x: IterateBlock,
}

/// `x' = Wx - α∇f(x)`.
pub fn dgd_step(state: &DgdState, w: &MixingMatrix, suite: &ObjectiveSuite, alpha: f64) -> Result<DgdState> {
    check_step(alpha)?;
    check_mixing(w, state.x.nrows(), StochasticMode::Doubly)?;
    let g = suite.block_gradient(&state.x)?;
    Ok(DgdState {
        k: state.k + 1,
        x: w.matrix() * &state.x - g * alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::consensus_norm;
    use crate::objective::quadratic_suite;
    use nalgebra::{DMatrix, DVector};

    fn two_agent() -> (ObjectiveSuite, MixingMatrix) {
        let s = quadratic_suite(
            &[1.0, 1.0],
            &[DVector::from_element(1, 0.0), DVector::from_element(1, 2.0)],
        )
        .unwrap();
        let w = MixingMatrix::custom(DMatrix::from_element(2, 2, 0.5), None).unwrap();
        (s, w)
    }

    #[test]
    fn hand_iterated_two_agent_example() {
        let (s, w) = two_agent();
        let alpha = 0.3;
        let st = DigingState::init(&s, DMatrix::from_column_slice(2, 1, &[0.0, 2.0])).unwrap();
        assert_eq!(st.y, DMatrix::zeros(2, 1));
        let st = diging_step(&st, &w, &s, alpha).unwrap();
        assert_eq!(st.x, DMatrix::from_column_slice(2, 1, &[1.0, 1.0]));
        assert_eq!(st.y, DMatrix::from_column_slice(2, 1, &[1.0, -1.0]));
        let st = diging_step(&st, &w, &s, alpha).unwrap();
        let expect_x = DMatrix::from_column_slice(2, 1, &[1.0 - alpha, 1.0 + alpha]);
        let expect_y = DMatrix::from_column_slice(2, 1, &[-alpha, alpha]);
        assert!((st.x - expect_x).abs().max() < 1e-15);
        assert!((st.y - expect_y).abs().max() < 1e-15);
    }

    #[test]
    fn dgd_leaves_consensus_with_nonzero_local_gradients() {
        let (s, w) = two_agent();
        let alpha = 0.2;
        let st = dgd_step(
            &DgdState {
                k: 0,
                x: DMatrix::from_element(2, 1, 1.0),
            },
            &w,
            &s,
            alpha,
        )
        .unwrap();
        assert!((st.x[(0, 0)] - (1.0 - alpha)).abs() < 1e-15);
        assert!((consensus_norm(&st.x) - alpha * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dgd_fixed_point_at_consensual_optimum() {
        let s = quadratic_suite(&[1.0, 1.0], &vec![DVector::from_element(1, 1.0); 2]).unwrap();
        let (_, w) = two_agent();
        let x = DMatrix::from_element(2, 1, 1.0);
        let st = dgd_step(&DgdState { k: 0, x: x.clone() }, &w, &s, 0.5).unwrap();
        assert_eq!(st.x, x);
    }

    #[test]
    fn steps_reject_non_doubly_stochastic_weights() {
        let (s, _) = two_agent();
        let c = MixingMatrix::custom(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.5]), None).unwrap();
        let st = DigingState::init(&s, DMatrix::zeros(2, 1)).unwrap();
        assert!(matches!(diging_step(&st, &c, &s, 0.1), Err(Error::NotStochastic { .. })));
        assert!(diging_step(&st, &MixingMatrix::custom(DMatrix::from_element(2, 2, 0.5), None).unwrap(), &s, 0.0).is_err());
    }
}
