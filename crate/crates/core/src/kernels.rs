//! Riesz kernels `k_s`, `K_{d-2}`, their gradients and the normalization
//! constant `c_d` that turns the Laplacian into the Riesz measure.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Spatial dimension `d >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Dimension(usize);

impl Dimension {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return domain("dimension must be at least 1");
        }
        Ok(Dimension(d))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    /// Checks that a point has exactly `d` coordinates.
    pub fn check_point(self, p: &[f64]) -> Result<()> {
        if p.len() != self.0 {
            return Err(Error::DimensionMismatch {
                expected: self.0,
                found: p.len(),
            });
        }
        Ok(())
    }
}

impl TryFrom<usize> for Dimension {
    type Error = Error;

    fn try_from(d: usize) -> Result<Self> {
        Dimension::new(d)
    }
}

impl From<Dimension> for usize {
    fn from(d: Dimension) -> usize {
        d.0
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A value of the extended real line backed by IEEE infinities.
///
/// Never holds NaN. Operations that would form `inf - inf` return
/// [`Error::Indeterminate`] instead of producing NaN.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ExtendedReal(f64);

impl ExtendedReal {
    pub const PLUS_INFINITY: ExtendedReal = ExtendedReal(f64::INFINITY);
    pub const MINUS_INFINITY: ExtendedReal = ExtendedReal(f64::NEG_INFINITY);
    pub const ZERO: ExtendedReal = ExtendedReal(0.0);

    pub fn new(v: f64) -> Result<Self> {
        if v.is_nan() {
            return Err(Error::Indeterminate("NaN is not an extended real".into()));
        }
        Ok(ExtendedReal(v))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn checked_add(self, other: ExtendedReal) -> Result<ExtendedReal> {
        let s = self.0 + other.0;
        if s.is_nan() {
            return Err(Error::Indeterminate(format!("{} + {}", self.0, other.0)));
        }
        Ok(ExtendedReal(s))
    }

    pub fn checked_sub(self, other: ExtendedReal) -> Result<ExtendedReal> {
        self.checked_add(ExtendedReal(-other.0))
    }

    /// Multiplication by a finite real. `0 * inf` is taken as 0, the
    /// integration convention for null sets.
    pub fn scale(self, a: f64) -> ExtendedReal {
        if a == 0.0 {
            ExtendedReal::ZERO
        } else {
            ExtendedReal(self.0 * a)
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `k_s(t)`: `ln t` for `s = 0`, `-sign(s) t^{-s}` otherwise.
pub fn k(s: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("k_s(t) requires t > 0, got {t}"));
    }
    Ok(k_unchecked(s, t))
}

#[inline]
fn k_unchecked(s: f64, t: f64) -> f64 {
    if s == 0.0 {
        t.ln()
    } else {
        -s.signum() * t.powf(-s)
    }
}

/// `k_{d-2}(t)` for `t > 0` without argument checks. Hot path of every
/// potential sum.
#[inline]
pub fn radial(d: Dimension, t: f64) -> f64 {
    match d.0 {
        1 => t,
        2 => t.ln(),
        3 => -1.0 / t,
        n => -t.powi(2 - n as i32),
    }
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `K_{d-2}(y, x)`. At `y = x` this is `-inf` for `d >= 2` and `0` for `d = 1`.
pub fn kernel(d: Dimension, y: &[f64], x: &[f64]) -> ExtendedReal {
    let t = distance(y, x);
    if t == 0.0 {
        return if d.0 == 1 {
            ExtendedReal::ZERO
        } else {
            ExtendedReal::MINUS_INFINITY
        };
    }
    ExtendedReal(radial(d, t))
}

/// `Gamma(d/2)` by the half-integer recurrence.
pub fn gamma_half(d: Dimension) -> f64 {
    let n = d.0;
    let (mut z, mut g) = if n.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, PI.sqrt())
    };
    let target = n as f64 / 2.0;
    while z < target {
        g *= z;
        z += 1.0;
    }
    g
}

/// `c_d = Gamma(d/2) / (2 pi^{d/2} max{1, d-2})`.
pub fn riesz_normalization(d: Dimension) -> f64 {
    let n = d.0;
    let spread = if n > 3 { (n - 2) as f64 } else { 1.0 };
    gamma_half(d) / (2.0 * PI.powf(n as f64 / 2.0) * spread)
}

/// Surface measure of the unit sphere in `R^d`, `2 pi^{d/2} / Gamma(d/2)`.
pub fn unit_sphere_area(d: Dimension) -> f64 {
    2.0 * PI.powf(d.0 as f64 / 2.0) / gamma_half(d)
}

/// Gradient in `y` of `K_{d-2}(y, x)`.
pub fn kernel_gradient(d: Dimension, y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let t = distance(y, x);
    if t == 0.0 {
        return domain("kernel gradient is undefined at the pole y = x");
    }
    let factor = match d.0 {
        1 => 1.0 / t,
        2 => 1.0 / (t * t),
        n => (n - 2) as f64 / t.powi(n as i32),
    };
    Ok(y.iter().zip(x).map(|(a, b)| (a - b) * factor).collect())
}
