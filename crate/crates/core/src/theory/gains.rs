//! Weighted ergodic norms, the small gain bound, and the arrow audit over recorded runs.

use serde::{Deserialize, Serialize};

use super::bounds::pushsum_constants;
use super::logspace::LogScalar;
use crate::algorithms::Algorithm;
use crate::error::{Error, Result};
use crate::harness::trace::RunTrace;

/// `ln max_{k ≤ K} λ^{-k} s_k`; `-inf` for an all-zero series.
pub fn ln_weighted_ergodic_norm(series: &[f64], lambda: f64) -> f64 {
    let ln_l = lambda.ln();
    series
        .iter()
        .enumerate()
        .map(|(k, &s)| s.ln() - k as f64 * ln_l)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max_{k ≤ K} λ^{-k} s_k` where `s_k` are Frobenius norms.
pub fn weighted_ergodic_norm(series: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!("λ = {lambda} is not in (0, 1)")));
    }
    Ok(ln_weighted_ergodic_norm(series, lambda).exp())
}

/// `(ω1γ2⋯γm + ω2γ3⋯γm + … + ωm) / (1 - γ1⋯γm)`.
pub fn small_gain_bound(gammas: &[f64], omegas: &[f64]) -> Result<f64> {
    if gammas.len() != omegas.len() || gammas.is_empty() {
        return Err(Error::Dimension(format!(
            "{} gains and {} offsets",
            gammas.len(),
            omegas.len()
        )));
    }
    if gammas.iter().chain(omegas).any(|&g| !(g >= 0.0)) {
        return Err(Error::InvalidArgument("gains and offsets must be nonnegative".into()));
    }
    let product: f64 = gammas.iter().product();
    if product >= 1.0 {
        return Err(Error::GainProduct(product));
    }
    // Horner-style accumulation: acc_i = acc_{i-1} γ_i + ω_i.
    let acc = gammas.iter().zip(omegas).fold(0.0, |acc, (&g, &w)| acc * g + w);
    Ok(acc / (1.0 - product))
}

/// Problem and algorithm constants needed to evaluate the arrow gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSetup {
    pub algorithm: Algorithm,
    pub n: usize,
    pub alpha: f64,
    pub l: f64,
    pub mu_bar: f64,
    pub mu_hat: f64,
    pub delta: f64,
    pub b: usize,
    pub beta: f64,
    pub eta: f64,
    /// `‖x̄(0) - x*‖`.
    pub initial_gap: f64,
    /// Push-DIGing only: `Q1` and the bound on `‖V⁻¹‖`.
    pub q1: Option<LogScalar>,
    pub vinv: Option<LogScalar>,
}

impl AuditSetup {
    /// Reads the constants recorded in a trace; `β = 2L/μ̂` and `η = 1`.
    /// For push runs `B⊖` defaults to the recorded window.
    pub fn from_trace(trace: &RunTrace, delta: Option<f64>, b: Option<usize>) -> Result<Self> {
        let m = &trace.meta;
        let delta = delta
            .or(m.delta)
            .ok_or_else(|| Error::InvalidArgument("no δ recorded in the trace; pass one".into()))?;
        let b = b
            .or(m.b)
            .ok_or_else(|| Error::InvalidArgument("no window B recorded in the trace; pass one".into()))?;
        let c = m.constants;
        let mut s = Self {
            algorithm: m.algorithm,
            n: m.n,
            alpha: m.alpha,
            l: c.l,
            mu_bar: c.mu_bar,
            mu_hat: c.mu_hat,
            delta,
            b,
            beta: 2.0 * c.l / c.mu_hat,
            eta: 1.0,
            initial_gap: m.initial_gap,
            q1: None,
            vinv: None,
        };
        if m.algorithm == Algorithm::PushDiging {
            let pc = pushsum_constants(m.n, m.b.unwrap_or(1))?;
            s.q1 = Some(pc.q1);
            s.vinv = Some(pc.vinv_bound);
        }
        Ok(s)
    }

    /// `√(L(1+η)/(μ̄η) + (μ̂/μ̄)β)`.
    fn igd_factor(&self) -> f64 {
        (self.l * (1.0 + self.eta) / (self.mu_bar * self.eta) + self.mu_hat / self.mu_bar * self.beta).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowCheck {
    pub name: String,
    /// Weighted norm of the arrow's target.
    pub lhs: f64,
    /// `γ · (weighted norm of the source) + ω`, in log form when astronomically large.
    pub rhs: LogScalar,
    pub gamma: LogScalar,
    pub omega: LogScalar,
    /// `1 - lhs/rhs`; zero when both sides vanish.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainLedger {
    pub lambda: f64,
    pub k: usize,
    pub norms: [f64; 4],
    pub arrows: Vec<ArrowCheck>,
    pub gain_product: LogScalar,
}

impl GainLedger {
    pub fn all_hold(&self) -> bool {
        self.arrows.iter().all(|a| a.holds)
    }
}

fn check(name: &str, ln_lhs: f64, ln_src: f64, gamma: LogScalar, omega: LogScalar) -> ArrowCheck {
    let rhs = (gamma * LogScalar::from_ln(ln_src)).add(omega);
    let margin = if ln_lhs == f64::NEG_INFINITY {
        if rhs.ln == f64::NEG_INFINITY {
            0.0
        } else {
            1.0
        }
    } else {
        -(ln_lhs - rhs.ln).exp_m1()
    };
    ArrowCheck {
        name: name.to_string(),
        lhs: ln_lhs.exp(),
        rhs,
        gamma,
        omega,
        margin,
        holds: margin >= -1e-12,
    }
}

/// Evaluates both sides of the four arrow inequalities `q → z → y̌ → x̌ → q`
/// (`y̌` replaced by `ȟ` for Push-DIGing) on the trace's series with rate `lambda`.
pub fn audit_arrows(trace: &RunTrace, setup: &AuditSetup, lambda: f64) -> Result<GainLedger> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!("λ = {lambda} is not in (0, 1)")));
    }
    let push = match setup.algorithm {
        Algorithm::Diging => false,
        Algorithm::PushDiging => true,
        other => {
            return Err(Error::InvalidArgument(format!(
                "the arrow audit covers diging and push-diging, not {other}"
            )))
        }
    };
    let b = setup.b;
    let lb = lambda.powi(b as i32);
    if lb <= setup.delta {
        return Err(Error::NoGuarantee(format!(
            "λ^B = {lb} does not exceed δ = {}; arrows 2 and 3 do not apply",
            setup.delta
        )));
    }
    let col = |f: &dyn Fn(&crate::harness::trace::SeriesRow) -> Option<f64>| -> Result<Vec<f64>> {
        trace
            .series
            .iter()
            .map(|r| f(r).ok_or_else(|| Error::InvalidArgument("trace lacks the y̌/ȟ series".into())))
            .collect()
    };
    let q = col(&|r| Some(r.q))?;
    let z = col(&|r| Some(r.z))?;
    let yc = col(&|r| r.y_check)?;
    let xc = col(&|r| Some(r.x_check))?;
    if q.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    let (nq, nz, ny, nx) = (
        ln_weighted_ergodic_norm(&q, lambda),
        ln_weighted_ergodic_norm(&z, lambda),
        ln_weighted_ergodic_norm(&yc, lambda),
        ln_weighted_ergodic_norm(&xc, lambda),
    );

    let sqrt_n = (setup.n as f64).sqrt();
    let geo = (1.0 - lb) / (1.0 - lambda);
    let lead = lb / (lb - setup.delta);
    let head = |s: &[f64]| -> f64 {
        (1..=b.min(s.len()))
            .map(|t| lambda.powi(1 - t as i32) * s[t - 1])
            .sum::<f64>()
    };
    let gamma1 = LogScalar::new(setup.l * (1.0 + 1.0 / lambda));
    let omega2 = LogScalar::new(lead * head(&yc));
    let omega3 = LogScalar::new(lead * head(&xc));
    let base4 = 1.0 + sqrt_n / lambda * setup.igd_factor();
    let omega4 = LogScalar::new(2.0 * sqrt_n * setup.initial_gap);
    let (gamma2, gamma3, gamma4) = if push {
        let q1 = setup
            .q1
            .ok_or_else(|| Error::InvalidArgument("push audit needs Q1".into()))?;
        let vinv = setup
            .vinv
            .ok_or_else(|| Error::InvalidArgument("push audit needs the ‖V⁻¹‖ bound".into()))?;
        let g2 = q1 * vinv * LogScalar::new(lambda * geo / (lb - setup.delta));
        let tail = (1.0 - lambda.powi(b as i32 - 1)) / (1.0 - lambda);
        let g3 = LogScalar::new(setup.alpha / (lb - setup.delta))
            * LogScalar::new(setup.delta).add(q1 * LogScalar::new(tail));
        (g2, g3, LogScalar::new((1.0 + sqrt_n) * base4))
    } else {
        (
            LogScalar::new(lambda * geo / (lb - setup.delta)),
            LogScalar::new(setup.alpha * geo / (lb - setup.delta)),
            LogScalar::new(base4),
        )
    };
    let arrows = vec![
        check("q->z", nz, nq, gamma1, LogScalar::ZERO),
        check(if push { "z->h" } else { "z->y" }, ny, nz, gamma2, omega2),
        check(if push { "h->x" } else { "y->x" }, nx, ny, gamma3, omega3),
        check("x->q", nq, nx, gamma4, omega4),
    ];
    Ok(GainLedger {
        lambda,
        k: trace.series.len() - 1,
        norms: [nq.exp(), nz.exp(), ny.exp(), nx.exp()],
        arrows,
        gain_product: gamma1 * gamma2 * gamma3 * gamma4,
    })
}

/// Conditions under which the inexact gradient bound holds:
/// `√(1 - θμ̄β/(β+1)) ≤ λ < 1` and `θ ≤ 1/((1+η)L̄)`.
pub fn igd_conditions(theta: f64, lambda: f64, mu_bar: f64, l_bar: f64, beta: f64, eta: f64) -> Result<()> {
    if !(beta > 0.0 && eta > 0.0 && theta > 0.0) {
        return Err(Error::InvalidArgument("θ, β and η must be positive".into()));
    }
    let floor = (1.0 - theta * mu_bar * beta / (beta + 1.0)).max(0.0).sqrt();
    if !(floor <= lambda && lambda < 1.0) {
        return Err(Error::NoGuarantee(format!("λ = {lambda} outside [{floor}, 1)")));
    }
    if theta > 1.0 / ((1.0 + eta) * l_bar) {
        return Err(Error::StepOutOfWindow {
            alpha: theta,
            alpha_max: 1.0 / ((1.0 + eta) * l_bar),
        });
    }
    Ok(())
}

/// Right-hand side of the inexact gradient bound:
/// `2r⁰ + (λ√n)⁻¹ √(L(1+η)/(μ̄η) + (μ̂/μ̄)β) Σ_i ‖p - s_i‖^{λ,K}`.
#[allow(clippy::too_many_arguments)]
pub fn igd_bound_rhs(
    r0: f64,
    deviation_norms: &[f64],
    lambda: f64,
    n: usize,
    l: f64,
    mu_bar: f64,
    mu_hat: f64,
    beta: f64,
    eta: f64,
) -> f64 {
    let factor = (l * (1.0 + eta) / (mu_bar * eta) + mu_hat / mu_bar * beta).sqrt();
    2.0 * r0 + factor / (lambda * (n as f64).sqrt()) * deviation_norms.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ergodic_norm_examples() {
        assert_eq!(weighted_ergodic_norm(&[0.0, 0.0, 0.0], 0.5).unwrap(), 0.0);
        assert!((weighted_ergodic_norm(&[1.0, 1.0, 1.0], 0.5).unwrap() - 4.0).abs() < 1e-14);
        let c = 3.0;
        let v = weighted_ergodic_norm(&[c; 6], 0.9).unwrap();
        assert!((v - c / 0.9f64.powi(5)).abs() < 1e-12);
        assert!(weighted_ergodic_norm(&[1.0], 1.0).is_err());
    }

    #[test]
    fn small_gain_examples() {
        assert!((small_gain_bound(&[0.5, 0.5], &[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(small_gain_bound(&[0.3, 0.7, 0.2], &[0.0; 3]).unwrap(), 0.0);
        assert!((small_gain_bound(&[0.9], &[1.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(small_gain_bound(&[2.0, 0.5], &[1.0, 1.0]), Err(Error::GainProduct(_))));
    }

    #[test]
    fn igd_condition_checks() {
        assert!(igd_conditions(0.25, 0.95, 1.0, 2.0, 2.0, 1.0).is_ok());
        assert!(igd_conditions(0.3, 0.95, 1.0, 2.0, 2.0, 1.0).is_err());
        assert!(igd_conditions(0.25, 0.5, 1.0, 2.0, 2.0, 1.0).is_err());
    }
}
