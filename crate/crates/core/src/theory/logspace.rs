//! Positive reals stored by their natural logarithm, for constants far
//! outside the range of `f64`.

use std::fmt;
use std::ops::{Div, Mul};

use serde::{Deserialize, Serialize};

/// `ln(exp(a) + exp(b))` without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// A nonnegative real `exp(ln)`; zero is `ln = -inf`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogScalar {
    pub ln: f64,
}

impl LogScalar {
    pub const ZERO: LogScalar = LogScalar { ln: f64::NEG_INFINITY };
    pub const ONE: LogScalar = LogScalar { ln: 0.0 };

    pub fn from_ln(ln: f64) -> Self {
        Self { ln }
    }

    pub fn new(x: f64) -> Self {
        debug_assert!(x >= 0.0, "LogScalar holds nonnegative values, got {x}");
        Self { ln: x.ln() }
    }

    pub fn value(self) -> f64 {
        self.ln.exp()
    }

    pub fn log10(self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    /// `(m, e)` with `value = m · 10^e` and `1 ≤ m < 10`.
    pub fn mantissa_exponent(self) -> (f64, i64) {
        if self.ln == f64::NEG_INFINITY {
            return (0.0, 0);
        }
        let l = self.log10();
        let mut e = l.floor();
        let mut m = 10f64.powf(l - e);
        if m >= 10.0 {
            m /= 10.0;
            e += 1.0;
        }
        (m, e as i64)
    }

    pub fn powf(self, p: f64) -> Self {
        Self { ln: self.ln * p }
    }

    pub fn add(self, other: Self) -> Self {
        Self {
            ln: ln_add_exp(self.ln, other.ln),
        }
    }
}

impl Mul for LogScalar {
    type Output = LogScalar;

    fn mul(self, rhs: Self) -> Self {
        Self { ln: self.ln + rhs.ln }
    }
}

impl Div for LogScalar {
    type Output = LogScalar;

    fn div(self, rhs: Self) -> Self {
        Self { ln: self.ln - rhs.ln }
    }
}

impl fmt::Display for LogScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.value();
        if v.is_finite() && v != 0.0 && (1e-300..1e300).contains(&v) {
            return write!(f, "{v:.6e}");
        }
        if self.ln == f64::NEG_INFINITY {
            return f.write_str("0");
        }
        let (m, e) = self.mantissa_exponent();
        write!(f, "{m:.6}e{e}")
    }
}
