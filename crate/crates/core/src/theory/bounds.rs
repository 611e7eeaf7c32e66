//! Closed-form step-size windows and geometric rates.

use serde::{Deserialize, Serialize};

use super::logspace::{ln_add_exp, LogScalar};
use crate::error::{Error, Result};

const LN_1_5: f64 = 0.405_465_108_108_164_4;

/// Largest value reported for λ when the formula reaches 1.
pub const LAMBDA_CEILING: f64 = 1.0 - 1.0 / (1u64 << 40) as f64;

/// `J1 = 3κ̄B²(1 + 4√n√κ̄)`.
pub fn j1(kappa_bar: f64, b: usize, n: usize) -> f64 {
    let b = b as f64;
    3.0 * kappa_bar * b * b * (1.0 + 4.0 * (n as f64).sqrt() * kappa_bar.sqrt())
}

/// Endpoints of the admissible step sizes for a gain constant `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepWindow {
    /// `1.5(1-δ)²/(μ̄J)`.
    pub alpha_max: f64,
    /// `1.5(√(J² + (1-δ²)J) - δJ)² / (μ̄J(J+1)²)`: the first rate branch applies up to here.
    pub alpha_breakpoint: f64,
    pub ln_alpha_max: f64,
    pub ln_alpha_breakpoint: f64,
}

fn window_from_ln_j(ln_j: f64, delta: f64, mu_bar: f64) -> Result<StepWindow> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::NoGuarantee(format!("contraction factor δ = {delta} is not in [0, 1)")));
    }
    if !(mu_bar > 0.0) {
        return Err(Error::NoGuarantee(format!("μ̄ = {mu_bar} must be positive")));
    }
    if !ln_j.is_finite() {
        return Err(Error::NoGuarantee(format!("gain constant has ln J = {ln_j}")));
    }
    let ln_mu = mu_bar.ln();
    let ln_alpha_max = LN_1_5 + 2.0 * (-delta).ln_1p() - ln_mu - ln_j;
    // √(J² + (1-δ²)J) - δJ = J·s with s = (1-δ) + ε/(√(1+ε)+1), ε = (1-δ²)/J.
    let eps = ((1.0 - delta * delta).ln() - ln_j).exp();
    let s = (1.0 - delta) + eps / ((1.0 + eps).sqrt() + 1.0);
    let ln_j_plus_1 = ln_add_exp(ln_j, 0.0);
    let ln_alpha_breakpoint = LN_1_5 + ln_j + 2.0 * s.ln() - ln_mu - 2.0 * ln_j_plus_1;
    Ok(StepWindow {
        alpha_max: ln_alpha_max.exp(),
        alpha_breakpoint: ln_alpha_breakpoint.exp(),
        ln_alpha_max,
        ln_alpha_breakpoint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateBranch {
    /// `λ = (1 - αμ̄/1.5)^{1/(2B)}`, also used at the breakpoint itself.
    First,
    /// `λ = (√(αμ̄J/1.5) + δ)^{1/B}`.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    pub lambda: f64,
    pub ln_lambda: f64,
    pub branch: RateBranch,
    /// The formula gave λ ≥ 1 (closed right endpoint); λ was clamped to [`LAMBDA_CEILING`].
    pub degenerate: bool,
    pub window: StepWindow,
}

fn rate_from_ln_j(alpha: f64, ln_j: f64, delta: f64, mu_bar: f64, b: usize) -> Result<RateBound> {
    let window = window_from_ln_j(ln_j, delta, mu_bar)?;
    if b == 0 {
        return Err(Error::InvalidArgument("B must be at least 1".into()));
    }
    if !(alpha > 0.0) || alpha.ln() > window.ln_alpha_max + 1e-12 {
        return Err(Error::StepOutOfWindow {
            alpha,
            alpha_max: window.alpha_max,
        });
    }
    let ln_alpha = alpha.ln();
    let b = b as f64;
    let (branch, mut ln_lambda) = if ln_alpha <= window.ln_alpha_breakpoint {
        (RateBranch::First, (-alpha * mu_bar / 1.5).ln_1p() / (2.0 * b))
    } else {
        let ln_root = 0.5 * (ln_alpha + mu_bar.ln() + ln_j - LN_1_5);
        (RateBranch::Second, ln_add_exp(ln_root, delta.ln()) / b)
    };
    let ceiling = LAMBDA_CEILING.ln();
    let degenerate = ln_lambda > ceiling;
    if degenerate {
        ln_lambda = ceiling;
    }
    Ok(RateBound {
        lambda: ln_lambda.exp(),
        ln_lambda,
        branch,
        degenerate,
        window,
    })
}

/// Window for `ln J`, and the rate at `alpha` when one is given.
pub fn rate_from_parts(
    alpha: Option<f64>,
    ln_j: f64,
    delta: f64,
    mu_bar: f64,
    b: usize,
) -> Result<(StepWindow, Option<RateBound>)> {
    let window = window_from_ln_j(ln_j, delta, mu_bar)?;
    let rate = alpha.map(|a| rate_from_ln_j(a, ln_j, delta, mu_bar, b)).transpose()?;
    Ok((window, rate))
}

pub fn diging_step_size_window(kappa_bar: f64, b: usize, n: usize, delta: f64, mu_bar: f64) -> Result<StepWindow> {
    window_from_ln_j(j1(kappa_bar, b, n).ln(), delta, mu_bar)
}

/// Rate guaranteed for DIGing with step `alpha`.
pub fn diging_rate(alpha: f64, kappa_bar: f64, b: usize, n: usize, delta: f64, mu_bar: f64) -> Result<RateBound> {
    rate_from_ln_j(alpha, j1(kappa_bar, b, n).ln(), delta, mu_bar, b)
}

/// Same as [`diging_rate`] but with an explicit `J`, e.g. to probe the formula.
pub fn rate_for_gain(alpha: f64, j: f64, delta: f64, mu_bar: f64, b: usize) -> Result<RateBound> {
    rate_from_ln_j(alpha, j.ln(), delta, mu_bar, b)
}

pub fn window_for_gain(j: f64, delta: f64, mu_bar: f64) -> Result<StepWindow> {
    window_from_ln_j(j.ln(), delta, mu_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalability {
    pub alpha: f64,
    pub lambda: f64,
    /// `128B²n^{4.5}κ̄^{1.5}/τ²`, the reciprocal of `1 - λ^B`.
    pub iterations_per_e_fold: f64,
}

/// Step size and rate from the δ ≤ 1 - τ/(2n²) consensus bound.
pub fn corollary_scalability(tau: f64, b: usize, n: usize, kappa_bar: f64, l: f64, mu_bar: f64) -> Scalability {
    let b = b as f64;
    let denom = 128.0 * b * b * (n as f64).powf(4.5);
    let phi = tau * tau / (denom * kappa_bar.powf(1.5));
    let alpha = 3.0 * tau * tau / (denom * l * kappa_bar.sqrt()) - (1.5 / mu_bar) * phi * phi;
    Scalability {
        alpha,
        lambda: ((-phi).ln_1p() / b).exp(),
        iterations_per_e_fold: 1.0 / phi,
    }
}

/// Rate under lazy Metropolis weights on a static connected graph.
pub fn corollary_metropolis(n: usize, kappa_bar: f64) -> f64 {
    1.0 - 1.0 / (161_312.0 * (n as f64).powf(4.5) * kappa_bar.powf(1.5))
}

/// Push-sum contraction constants for `n` agents and connectivity window `B⊖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushSumConstants {
    /// `n^{-(2 + nB⊖)}`.
    pub tau_tilde: LogScalar,
    /// `2n(1 + τ̃^{-nB⊖})/(1 - τ̃^{nB⊖})`.
    pub q1: LogScalar,
    /// Smallest `B ≥ B⊖` with `δ < 1`.
    pub b_required: LogScalar,
    /// `b_required` as an integer when it fits.
    pub b_required_exact: Option<u64>,
    /// δ at `b_required`; the largest double below 1 when `b_required` is
    /// only known in log form.
    pub delta: f64,
    /// `n^{nB⊖}`, bounding `‖V(k)⁻¹‖_max`.
    pub vinv_bound: LogScalar,
}

fn ln_one_minus_t(n: usize, b_minus: usize) -> (f64, f64) {
    let e = (n * b_minus) as f64;
    let ln_t = -e * (2.0 + e) * (n as f64).ln();
    (ln_t, (-ln_t.exp()).ln_1p())
}

/// `ln(-ln(1 - t))`, using `-ln(1 - t) ≈ t` once `t` is below double precision.
fn ln_neg_ln_one_minus_t(ln_t: f64, ln_1mt: f64) -> f64 {
    if ln_t < -30.0 {
        ln_t
    } else {
        (-ln_1mt).ln()
    }
}

pub fn pushsum_constants(n: usize, b_minus: usize) -> Result<PushSumConstants> {
    if n < 2 || b_minus < 1 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 2 and B⊖ >= 1, got n={n}, B⊖={b_minus}"
        )));
    }
    let ln_n = (n as f64).ln();
    let e = (n * b_minus) as f64;
    let ln_tau = -(2.0 + e) * ln_n;
    let (ln_t, ln_1mt) = ln_one_minus_t(n, b_minus);
    // ln(1 + 1/t) = -ln t + ln(1 + t)
    let ln_q1 = (2.0 * n as f64).ln() + (-ln_t) + ln_t.exp().ln_1p() - ln_1mt;
    // δ(B) < 1  ⟺  B - 1 > x = nB⊖ ln Q1 / (-ln(1-t))
    let ln_x = e.ln() + ln_q1.ln() - ln_neg_ln_one_minus_t(ln_t, ln_1mt);
    let x = ln_x.exp();
    let (b_required, b_required_exact) = if x < 9.0e15 {
        let b = ((x.floor() as u64) + 2).max(b_minus as u64);
        (LogScalar::new(b as f64), Some(b))
    } else {
        (LogScalar::from_ln(ln_x), None)
    };
    let delta = match b_required_exact {
        Some(_) => pushsum_delta_ln(ln_q1, ln_neg_ln_one_minus_t(ln_t, ln_1mt), e, b_required.ln).exp(),
        // 1 - δ is below τ̃^{nB⊖}, far under double resolution
        None => 1.0 - f64::EPSILON / 2.0,
    };
    Ok(PushSumConstants {
        tau_tilde: LogScalar::from_ln(ln_tau),
        q1: LogScalar::from_ln(ln_q1),
        b_required,
        b_required_exact,
        delta,
        vinv_bound: LogScalar::from_ln(e * ln_n),
    })
}

/// `ln δ = ln Q1 - (B-1)/e · (-ln(1-t))`, with `B` given by its logarithm.
fn pushsum_delta_ln(ln_q1: f64, ln_neg_ln_1mt: f64, e: f64, ln_b: f64) -> f64 {
    let ln_bm1 = if ln_b > 36.0 { ln_b } else { (ln_b.exp() - 1.0).max(0.0).ln() };
    ln_q1 - (ln_bm1 + ln_neg_ln_1mt - e.ln()).exp()
}

/// `δ = Q1 (1 - τ̃^{nB⊖})^{(B-1)/(nB⊖)}` for a given window `B`.
pub fn pushsum_delta(n: usize, b_minus: usize, b: f64) -> Result<LogScalar> {
    let c = pushsum_constants(n, b_minus)?;
    let (ln_t, ln_1mt) = ln_one_minus_t(n, b_minus);
    Ok(LogScalar::from_ln(pushsum_delta_ln(
        c.q1.ln,
        ln_neg_ln_one_minus_t(ln_t, ln_1mt),
        (n * b_minus) as f64,
        b.ln(),
    )))
}

/// `J2 = 3Q1‖V⁻¹‖κ̄B(δ + Q1(B-1))(1+√n)(1 + 4√n√κ̄)`.
pub fn j2(q1: LogScalar, vinv: LogScalar, kappa_bar: f64, b: usize, n: usize, delta: f64) -> LogScalar {
    let sn = (n as f64).sqrt();
    let inner = if b > 1 {
        LogScalar::new(delta).add(q1 * LogScalar::new((b - 1) as f64))
    } else {
        LogScalar::new(delta)
    };
    LogScalar::new(3.0 * kappa_bar * b as f64 * (1.0 + sn) * (1.0 + 4.0 * sn * kappa_bar.sqrt())) * q1 * vinv * inner
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushRate {
    pub j2: LogScalar,
    pub rate: RateBound,
}

/// `J2` and the Push-DIGing rate for step `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn j2_and_push_rate(
    q1: LogScalar,
    vinv: LogScalar,
    kappa_bar: f64,
    b: usize,
    n: usize,
    delta: f64,
    mu_bar: f64,
    alpha: f64,
) -> Result<PushRate> {
    let j = j2(q1, vinv, kappa_bar, b, n, delta);
    let rate = rate_from_ln_j(alpha, j.ln, delta, mu_bar, b)?;
    Ok(PushRate { j2: j, rate })
}

pub fn push_step_size_window(
    q1: LogScalar,
    vinv: LogScalar,
    kappa_bar: f64,
    b: usize,
    n: usize,
    delta: f64,
    mu_bar: f64,
) -> Result<StepWindow> {
    window_from_ln_j(j2(q1, vinv, kappa_bar, b, n, delta).ln, delta, mu_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn j1_values() {
        assert_eq!(j1(1.0, 1, 1), 15.0);
        assert_relative_eq!(j1(1.0, 1, 12), 3.0 * (1.0 + 4.0 * 12f64.sqrt()), max_relative = 1e-15);
        assert_relative_eq!(j1(2.0, 2, 5), 4.0 * j1(2.0, 1, 5), max_relative = 1e-15);
    }

    #[test]
    fn window_examples() {
        let w = window_for_gain(15.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(w.alpha_max, 0.1, max_relative = 1e-14);
        assert_relative_eq!(w.alpha_breakpoint, 0.09375, max_relative = 1e-14);
        assert!(window_for_gain(15.0, 1.0, 1.0).is_err());
        let near = window_for_gain(15.0, 1.0 - 1e-9, 1.0).unwrap();
        assert!(near.alpha_max < 1e-18);
    }

    #[test]
    fn rate_examples() {
        let r = rate_for_gain(0.05, 15.0, 0.0, 1.0, 1).unwrap();
        assert_eq!(r.branch, RateBranch::First);
        assert_relative_eq!(r.lambda, (1.0 - 0.05 / 1.5f64).sqrt(), max_relative = 1e-14);
        assert!((r.lambda - 0.98319).abs() < 1e-5);

        let r = rate_for_gain(0.1, 15.0, 0.0, 1.0, 1).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.lambda, LAMBDA_CEILING);

        let r = rate_for_gain(1e-12, 15.0, 0.0, 1.0, 1).unwrap();
        assert!(r.lambda < 1.0 && r.lambda > 1.0 - 1e-11);

        assert!(matches!(
            rate_for_gain(0.2, 15.0, 0.0, 1.0, 1),
            Err(Error::StepOutOfWindow { .. })
        ));
    }

    #[test]
    fn first_branch_at_breakpoint() {
        let w = window_for_gain(40.0, 0.3, 2.0).unwrap();
        let r = rate_for_gain(w.alpha_breakpoint, 40.0, 0.3, 2.0, 2).unwrap();
        assert_eq!(r.branch, RateBranch::First);
        let r2 = rate_for_gain(w.alpha_breakpoint * (1.0 + 1e-9), 40.0, 0.3, 2.0, 2).unwrap();
        assert_eq!(r2.branch, RateBranch::Second);
        // The branches meet continuously.
        assert_relative_eq!(r.lambda, r2.lambda, max_relative = 1e-8);
    }

    #[test]
    fn scalability_examples() {
        let s = corollary_scalability(1.0, 1, 1, 1.0, 1.0, 1.0);
        assert_relative_eq!(s.lambda, 1.0 - 1.0 / 128.0, max_relative = 1e-15);
        assert_relative_eq!(s.iterations_per_e_fold, 128.0, max_relative = 1e-15);
        let l12 = corollary_scalability(1.0, 1, 12, 1.0, 1.0, 1.0).lambda;
        assert!(l12 > s.lambda);
    }

    #[test]
    fn metropolis_corollary_matches_scalability() {
        for n in [1, 3, 12, 40] {
            for kappa in [1.0, 4.0, 30.0] {
                let a = corollary_metropolis(n, kappa);
                let b = corollary_scalability(2.0 / 71.0, 1, n, kappa, kappa, 1.0).lambda;
                assert_relative_eq!(1.0 - a, 1.0 - b, max_relative = 1e-6);
            }
        }
        assert_eq!(corollary_metropolis(1, 1.0), 1.0 - 1.0 / 161_312.0);
    }

    #[test]
    fn pushsum_two_agents() {
        let c = pushsum_constants(2, 1).unwrap();
        assert_relative_eq!(c.tau_tilde.value(), 1.0 / 16.0, max_relative = 1e-15);
        assert_relative_eq!(c.q1.value(), 263_168.0 / 255.0, max_relative = 1e-13);
        assert_eq!(c.b_required_exact, Some(3547));
        assert!(c.delta < 1.0);
        assert!(pushsum_delta(2, 1, 3546.0).unwrap().value() >= 1.0);
        assert_relative_eq!(pushsum_constants(3, 1).unwrap().vinv_bound.value(), 27.0, max_relative = 1e-14);
    }

    #[test]
    fn pushsum_is_finite_for_large_networks() {
        let c = pushsum_constants(12, 2).unwrap();
        assert!(c.q1.ln.is_finite() && c.q1.value().is_infinite());
        assert!(c.b_required_exact.is_none());
        assert!(c.b_required.ln.is_finite());
    }

    #[test]
    fn j2_with_single_step_window() {
        let q1 = LogScalar::new(5.0);
        let v = LogScalar::new(3.0);
        let n = 4;
        let expect = 3.0 * 5.0 * 3.0 * 2.0 * 0.4 * (1.0 + 2.0) * (1.0 + 4.0 * 2.0 * 2f64.sqrt());
        assert_relative_eq!(j2(q1, v, 2.0, 1, n, 0.4).value(), expect, max_relative = 1e-13);
    }
}
