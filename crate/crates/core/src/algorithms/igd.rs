//! Centralized gradient descent whose gradients are evaluated at perturbed points.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::objective::ObjectiveSuite;

/// How the evaluation points `s_i^k` deviate from `p^k`.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    None,
    /// `s_i^k = p^k + e_i`.
    Fixed(Vec<DVector<f64>>),
    /// `s_i^k = p^k + rate^k e_i`.
    Decaying { offsets: Vec<DVector<f64>>, rate: f64 },
}

impl Perturbation {
    pub fn points(&self, p: &DVector<f64>, n: usize, k: usize) -> Vec<DVector<f64>> {
        match self {
            Perturbation::None => vec![p.clone(); n],
            Perturbation::Fixed(e) => e.iter().map(|e| p + e).collect(),
            Perturbation::Decaying { offsets, rate } => {
                let s = rate.powi(k as i32);
                offsets.iter().map(|e| p + e * s).collect()
            }
        }
    }

    fn check(&self, n: usize, dim: usize) -> Result<()> {
        let offsets = match self {
            Perturbation::None => return Ok(()),
            Perturbation::Fixed(e) => e,
            Perturbation::Decaying { offsets, .. } => offsets,
        };
        if offsets.len() != n || offsets.iter().any(|e| e.len() != dim) {
            return Err(Error::Dimension(format!("need {n} offsets of length {dim}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgdState {
    pub k: usize,
    pub p: DVector<f64>,
    /// Evaluation points used at iteration `k`.
    pub s: Vec<DVector<f64>>,
}

impl IgdState {
    pub fn init(suite: &ObjectiveSuite, p0: DVector<f64>, perturbation: &Perturbation) -> Result<Self> {
        perturbation.check(suite.n(), suite.p())?;
        if p0.len() != suite.p() {
            return Err(Error::Dimension(format!("p0 has length {}, expected {}", p0.len(), suite.p())));
        }
        let s = perturbation.points(&p0, suite.n(), 0);
        Ok(Self { k: 0, p: p0, s })
    }
}

/// `p' = p - θ (1/n) Σ ∇f_i(s_i)`.
pub fn igd_step(state: &IgdState, suite: &ObjectiveSuite, theta: f64, perturbation: &Perturbation) -> Result<IgdState> {
    let n = suite.n();
    let mut g = DVector::zeros(suite.p());
    for (c, s) in suite.components().iter().zip(&state.s) {
        g += c.grad(s);
    }
    let p = &state.p - g * (theta / n as f64);
    let s = perturbation.points(&p, n, state.k + 1);
    Ok(IgdState { k: state.k + 1, p, s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::quadratic_suite;

    #[test]
    fn unperturbed_is_gradient_descent() {
        let s = quadratic_suite(&[1.0, 3.0], &[DVector::from_element(1, 0.0), DVector::from_element(1, 4.0)]).unwrap();
        let mut st = IgdState::init(&s, DVector::from_element(1, 10.0), &Perturbation::None).unwrap();
        let theta = 0.25;
        let mut p = 10.0_f64;
        for _ in 0..20 {
            st = igd_step(&st, &s, theta, &Perturbation::None).unwrap();
            p -= theta * (p + 3.0 * (p - 4.0)) / 2.0;
            assert!((st.p[0] - p).abs() < 1e-13);
        }
    }

    #[test]
    fn contraction_ratio_single_function() {
        let s = quadratic_suite(&[2.0], &[DVector::from_element(2, 1.0)]).unwrap();
        let theta: f64 = 0.2;
        let (beta, mu): (f64, f64) = (2.0, 2.0);
        let lambda = (1.0 - theta * mu * beta / (beta + 1.0)).sqrt();
        let xs = DVector::from_element(2, 1.0);
        let mut st = IgdState::init(&s, DVector::from_vec(vec![5.0, -3.0]), &Perturbation::None).unwrap();
        for _ in 0..30 {
            let r = (&st.p - &xs).norm();
            st = igd_step(&st, &s, theta, &Perturbation::None).unwrap();
            assert!((&st.p - &xs).norm() <= lambda * r + 1e-15);
        }
    }
}
