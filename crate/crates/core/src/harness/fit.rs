//! Least-squares rate fits on residual curves.

use serde::{Deserialize, Serialize};

use super::trace::RunTrace;
use crate::error::{Error, Result};

/// Minimum number of usable points after burn-in.
pub const MIN_FIT_POINTS: usize = 50;

pub const DEFAULT_BURN_IN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of `log10(residual)` per iteration.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    /// The residual reached exactly zero and only the positive prefix was used.
    pub truncated: bool,
}

impl RateFit {
    /// Per-iteration contraction factor `10^slope`.
    pub fn factor(&self) -> f64 {
        10f64.powf(self.slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayClass {
    Geometric,
    Sublinear,
    Flat,
}

/// Ordinary least squares `y ≈ a + s x`; returns `(s, a, R²)`.
/// R² is 1 when `y` is constant and fitted exactly.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 {
        1.0 - sse / syy
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    (slope, intercept, r2)
}

/// Fits `log10(r_k)` against `k` over the points remaining after dropping the
/// first `burn_in` fraction. If some residual is exactly zero, the fit uses the
/// strictly positive prefix and sets `truncated`.
pub fn rate_fit_points(points: &[(usize, f64)], burn_in: f64) -> Result<RateFit> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::InvalidArgument(format!("burn-in fraction {burn_in} not in [0, 1)")));
    }
    let prefix = points.iter().position(|&(_, r)| r <= 0.0).unwrap_or(points.len());
    let truncated = prefix < points.len();
    let usable = &points[..prefix];
    let start = (burn_in * usable.len() as f64).floor() as usize;
    let tail = &usable[start..];
    if tail.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(format!(
            "only {} positive residuals after burn-in, need {MIN_FIT_POINTS}",
            tail.len()
        )));
    }
    let x: Vec<f64> = tail.iter().map(|&(k, _)| k as f64).collect();
    let y: Vec<f64> = tail.iter().map(|&(_, r)| r.log10()).collect();
    let (slope, intercept, r_squared) = linear_fit(&x, &y);
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: tail.len(),
        truncated,
    })
}

pub fn rate_fit(trace: &RunTrace, burn_in: f64) -> Result<RateFit> {
    let pts: Vec<(usize, f64)> = trace.rows.iter().map(|r| (r.k, r.residual)).collect();
    rate_fit_points(&pts, burn_in)
}

/// Fit restricted to rows with `lo <= residual <= hi`, the part of a curve
/// that lies above the floating point floor and past the transient.
pub fn segment_fit(trace: &RunTrace, lo: f64, hi: f64) -> Result<RateFit> {
    let pts: Vec<(usize, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.residual >= lo && r.residual <= hi)
        .map(|r| (r.k, r.residual))
        .collect();
    rate_fit_points(&pts, 0.0)
}

/// Below this ratio of late to early semilog slope a curve counts as decelerating.
pub const SUBLINEAR_SLOPE_RATIO: f64 = 0.75;

/// Curvature test on semilog axes. The post-burn-in curve is split in two
/// halves and each is fitted separately: a geometric curve keeps (or
/// steepens) its slope, a sublinear one flattens.
pub fn classify_decay(points: &[(usize, f64)], burn_in: f64) -> Result<DecayClass> {
    let whole = rate_fit_points(points, burn_in)?;
    if whole.slope.abs() < 1e-12 {
        return Ok(DecayClass::Flat);
    }
    let prefix = points.iter().position(|&(_, r)| r <= 0.0).unwrap_or(points.len());
    let usable = &points[..prefix];
    let tail = &usable[(burn_in * usable.len() as f64).floor() as usize..];
    let (early, late) = tail.split_at(tail.len() / 2);
    let slope = |part: &[(usize, f64)]| {
        let x: Vec<f64> = part.iter().map(|&(k, _)| k as f64).collect();
        let y: Vec<f64> = part.iter().map(|&(_, r)| r.log10()).collect();
        linear_fit(&x, &y).0
    };
    let (s1, s2) = (slope(early), slope(late));
    Ok(if s1 < 0.0 && s2 / s1 < SUBLINEAR_SLOPE_RATIO {
        DecayClass::Sublinear
    } else {
        DecayClass::Geometric
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_input() {
        let pts: Vec<_> = (0..400).map(|k| (k, 0.9f64.powi(k as i32))).collect();
        let f = rate_fit_points(&pts, 0.2).unwrap();
        assert!((f.slope - 0.9f64.log10()).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(!f.truncated);
        assert_eq!(classify_decay(&pts, 0.2).unwrap(), DecayClass::Geometric);
    }

    #[test]
    fn harmonic_input_is_sublinear() {
        let pts: Vec<_> = (1..2000).map(|k| (k, 1.0 / k as f64)).collect();
        let f = rate_fit_points(&pts, 0.2).unwrap();
        assert!(f.r_squared < 0.99);
        assert_eq!(classify_decay(&pts, 0.2).unwrap(), DecayClass::Sublinear);
    }

    #[test]
    fn constant_input() {
        let pts: Vec<_> = (0..100).map(|k| (k, 0.5)).collect();
        let f = rate_fit_points(&pts, 0.2).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(classify_decay(&pts, 0.2).unwrap(), DecayClass::Flat);
    }

    #[test]
    fn zero_residual_truncates() {
        let mut pts: Vec<_> = (0..200).map(|k| (k, 0.5f64.powi(k as i32))).collect();
        pts.push((200, 0.0));
        let f = rate_fit_points(&pts, 0.2).unwrap();
        assert!(f.truncated);
        assert_eq!(f.points, 160);
    }

    #[test]
    fn too_short() {
        let pts: Vec<_> = (0..40).map(|k| (k, 0.5)).collect();
        assert!(rate_fit_points(&pts, 0.0).is_err());
    }
}
