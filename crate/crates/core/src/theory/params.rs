//! Parameter sets for bound evaluation and the table printed by `digrate bounds`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bounds::{
    corollary_metropolis, corollary_scalability, diging_rate, diging_step_size_window, j1, j2, pushsum_constants,
    rate_from_parts, PushSumConstants, RateBound, Scalability, StepWindow,
};
use crate::error::{Error, Result};

/// Where a contraction factor came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaSource {
    /// Measured on a finite horizon.
    Empirical,
    /// A closed-form upper bound.
    Bound,
    #[default]
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryParams {
    pub n: usize,
    /// Analysis window `B`.
    #[serde(default = "one")]
    pub b: usize,
    /// Directed connectivity window `B⊖`; enables the push-sum rows.
    #[serde(default)]
    pub b_minus: Option<usize>,
    pub delta: f64,
    #[serde(default)]
    pub delta_source: DeltaSource,
    pub kappa_bar: f64,
    pub mu_bar: f64,
    /// Defaults to `κ̄ μ̄`.
    #[serde(default)]
    pub l: Option<f64>,
    /// Smallest positive mixing weight; defaults to `1/n`.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Step size at which to evaluate the rates.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Window for the push-sum rate; defaults to the smallest admissible one.
    #[serde(default)]
    pub push_b: Option<usize>,
}

fn one() -> usize {
    1
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.b == 0 {
            return Err(Error::InvalidArgument("n and B must be positive".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("δ = {} must be nonnegative", self.delta)));
        }
        if !(self.kappa_bar >= 1.0) {
            return Err(Error::InvalidArgument(format!("κ̄ = {} must be at least 1", self.kappa_bar)));
        }
        if !(self.mu_bar > 0.0) {
            return Err(Error::InvalidArgument(format!("μ̄ = {} must be positive", self.mu_bar)));
        }
        Ok(())
    }

    pub fn l(&self) -> f64 {
        self.l.unwrap_or(self.kappa_bar * self.mu_bar)
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(1.0 / self.n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PushReport {
    pub constants: PushSumConstants,
    pub b: Option<usize>,
    pub delta: Option<f64>,
    pub j2: Option<super::LogScalar>,
    pub window: Option<StepWindow>,
    pub rate: Option<RateBound>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub params: TheoryParams,
    pub j1: f64,
    pub window: Option<StepWindow>,
    pub rate: Option<RateBound>,
    pub note: Option<String>,
    pub scalability: Scalability,
    pub metropolis_lambda: f64,
    pub push: Option<PushReport>,
}

pub fn bounds_report(params: &TheoryParams) -> Result<BoundsReport> {
    params.validate()?;
    let p = params;
    let mut note = None;
    let window = match diging_step_size_window(p.kappa_bar, p.b, p.n, p.delta, p.mu_bar) {
        Ok(w) => Some(w),
        Err(e) => {
            note = Some(e.to_string());
            None
        }
    };
    let rate = match (p.alpha, window) {
        (Some(alpha), Some(_)) => match diging_rate(alpha, p.kappa_bar, p.b, p.n, p.delta, p.mu_bar) {
            Ok(r) => Some(r),
            Err(e) => {
                note = Some(e.to_string());
                None
            }
        },
        _ => None,
    };
    let push = match p.b_minus {
        None => None,
        Some(bm) => {
            let constants = pushsum_constants(p.n, bm)?;
            let mut report = PushReport {
                constants,
                b: None,
                delta: None,
                j2: None,
                window: None,
                rate: None,
                note: None,
            };
            let b = p.push_b.map(|b| b as u64).or(constants.b_required_exact);
            match b {
                None => report.note = Some(format!("smallest admissible window ≈ {} exceeds u64", constants.b_required)),
                Some(b) => {
                    let b = b as usize;
                    let delta = super::bounds::pushsum_delta(p.n, bm, b as f64)?.value();
                    report.b = Some(b);
                    report.delta = Some(delta);
                    let j = j2(constants.q1, constants.vinv_bound, p.kappa_bar, b, p.n, delta);
                    report.j2 = Some(j);
                    match rate_from_parts(p.alpha, j.ln, delta, p.mu_bar, b) {
                        Ok((w, r)) => {
                            report.window = Some(w);
                            report.rate = r;
                        }
                        Err(e) => report.note = Some(e.to_string()),
                    }
                }
            }
            Some(report)
        }
    };
    Ok(BoundsReport {
        params: p.clone(),
        j1: j1(p.kappa_bar, p.b, p.n),
        window,
        rate,
        note,
        scalability: corollary_scalability(p.tau(), p.b, p.n, p.kappa_bar, p.l(), p.mu_bar),
        metropolis_lambda: corollary_metropolis(p.n, p.kappa_bar),
        push,
    })
}

impl BoundsReport {
    /// Two-column text table.
    pub fn to_table(&self) -> String {
        let p = &self.params;
        let mut rows: Vec<(String, String)> = vec![
            ("n".into(), p.n.to_string()),
            ("B".into(), p.b.to_string()),
            ("delta".into(), format!("{} ({:?})", p.delta, p.delta_source).to_lowercase()),
            ("kappa_bar".into(), p.kappa_bar.to_string()),
            ("mu_bar".into(), p.mu_bar.to_string()),
            ("L".into(), p.l().to_string()),
            ("J1".into(), format!("{:.6}", self.j1)),
        ];
        if let Some(w) = self.window {
            rows.push(("alpha_max".into(), format!("{:.6e}", w.alpha_max)));
            rows.push(("alpha_breakpoint".into(), format!("{:.6e}", w.alpha_breakpoint)));
        }
        if let Some(a) = p.alpha {
            rows.push(("alpha".into(), a.to_string()));
        }
        if let Some(r) = self.rate {
            rows.push(("lambda".into(), format!("{:.12} ({:?} branch)", r.lambda, r.branch).to_lowercase()));
            if r.degenerate {
                rows.push(("lambda_degenerate".into(), "true".into()));
            }
        }
        if let Some(note) = &self.note {
            rows.push(("note".into(), note.clone()));
        }
        rows.push(("tau".into(), p.tau().to_string()));
        rows.push(("scalability_alpha".into(), format!("{:.6e}", self.scalability.alpha)));
        rows.push(("scalability_lambda".into(), format!("{:.15}", self.scalability.lambda)));
        rows.push(("lazy_metropolis_lambda".into(), format!("{:.15}", self.metropolis_lambda)));
        if let Some(push) = &self.push {
            let c = &push.constants;
            rows.push(("tau_tilde".into(), c.tau_tilde.to_string()));
            rows.push(("Q1".into(), c.q1.to_string()));
            rows.push(("Vinv_bound".into(), c.vinv_bound.to_string()));
            rows.push(("B_required".into(), c.b_required.to_string()));
            if let Some(b) = push.b {
                rows.push(("push_B".into(), b.to_string()));
            }
            if let Some(d) = push.delta {
                rows.push(("push_delta".into(), format!("{d:.12}")));
            }
            if let Some(j) = push.j2 {
                rows.push(("J2".into(), j.to_string()));
            }
            if let Some(w) = push.window {
                rows.push(("push_alpha_max".into(), super::LogScalar::from_ln(w.ln_alpha_max).to_string()));
            }
            if let Some(r) = push.rate {
                rows.push(("push_lambda".into(), format!("1 - {:e}", -r.ln_lambda.exp_m1())));
            }
            if let Some(note) = &push.note {
                rows.push(("push_note".into(), note.clone()));
            }
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}
