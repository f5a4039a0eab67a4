//! Exactly evaluable test functions `pt_mu + H`, with `mu` a discrete charge
//! and `H` a harmonic polynomial of degree at most two.

use serde::{Deserialize, Serialize};

use crate::charges::DiscreteCharge;
use crate::error::{domain, Error, Result};
use crate::kernels::Dimension;
use crate::potentials::{potential_direct, PotentialValue};

/// Harmonic monomials of degree at most two (0-based coordinate indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HarmonicTerm {
    Constant,
    Linear(usize),
    /// `x_i x_j`, `i != j`.
    Product(usize, usize),
    /// `x_i^2 - x_j^2`, `i != j`.
    DiffSquares(usize, usize),
}

impl HarmonicTerm {
    fn check(self, d: usize) -> Result<()> {
        let ok = match self {
            HarmonicTerm::Constant => true,
            HarmonicTerm::Linear(i) => i < d,
            HarmonicTerm::Product(i, j) | HarmonicTerm::DiffSquares(i, j) => i < d && j < d && i != j,
        };
        if ok {
            Ok(())
        } else {
            domain(format!("{self:?} is not a harmonic term in dimension {d}"))
        }
    }

    #[inline]
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            HarmonicTerm::Constant => 1.0,
            HarmonicTerm::Linear(i) => x[i],
            HarmonicTerm::Product(i, j) => x[i] * x[j],
            HarmonicTerm::DiffSquares(i, j) => x[i] * x[i] - x[j] * x[j],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicPoly {
    dim: Dimension,
    terms: Vec<(HarmonicTerm, f64)>,
}

impl HarmonicPoly {
    pub fn new(dim: Dimension, terms: Vec<(HarmonicTerm, f64)>) -> Result<Self> {
        for (t, c) in &terms {
            t.check(dim.get())?;
            if !c.is_finite() {
                return domain("harmonic coefficients must be finite");
            }
        }
        Ok(HarmonicPoly { dim, terms })
    }

    pub fn zero(dim: Dimension) -> Self {
        HarmonicPoly {
            dim,
            terms: Vec::new(),
        }
    }

    /// Canonical basis: `1`, `x_i`, `x_i x_j` (`i < j`), `x_i^2 - x_{i+1}^2`.
    pub fn basis(dim: Dimension) -> Vec<HarmonicTerm> {
        let d = dim.get();
        let mut b = vec![HarmonicTerm::Constant];
        b.extend((0..d).map(HarmonicTerm::Linear));
        for i in 0..d {
            for j in i + 1..d {
                b.push(HarmonicTerm::Product(i, j));
            }
        }
        b.extend((0..d.saturating_sub(1)).map(|i| HarmonicTerm::DiffSquares(i, i + 1)));
        b
    }

    /// Coefficients over [`HarmonicPoly::basis`]; missing trailing entries are
    /// zero.
    pub fn from_coeffs(dim: Dimension, coeffs: &[f64]) -> Result<Self> {
        let basis = Self::basis(dim);
        if coeffs.len() > basis.len() {
            return domain(format!(
                "{} coefficients given but the degree-2 harmonic basis in d={} has {}",
                coeffs.len(),
                dim,
                basis.len()
            ));
        }
        let terms = basis
            .into_iter()
            .zip(coeffs.iter().copied())
            .filter(|(_, c)| *c != 0.0)
            .collect();
        Self::new(dim, terms)
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn terms(&self) -> &[(HarmonicTerm, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(_, c)| *c == 0.0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(t, c)| c * t.eval(x)).sum()
    }
}

/// `pt_charge + harmonic`. Its Riesz measure is exactly `charge`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub charge: DiscreteCharge,
    pub harmonic: HarmonicPoly,
}

impl TestFunction {
    pub fn new(charge: DiscreteCharge, harmonic: HarmonicPoly) -> Result<Self> {
        if charge.dim() != harmonic.dim() {
            return Err(Error::DimensionMismatch {
                expected: charge.dim().get(),
                found: harmonic.dim().get(),
            });
        }
        Ok(TestFunction { charge, harmonic })
    }

    pub fn potential(charge: DiscreteCharge) -> Self {
        let harmonic = HarmonicPoly::zero(charge.dim());
        TestFunction { charge, harmonic }
    }

    pub fn harmonic_only(harmonic: HarmonicPoly) -> Self {
        TestFunction {
            charge: DiscreteCharge::empty(harmonic.dim()),
            harmonic,
        }
    }

    pub fn dim(&self) -> Dimension {
        self.charge.dim()
    }

    pub fn eval(&self, y: &[f64]) -> PotentialValue {
        match potential_direct(&self.charge, y) {
            PotentialValue::Finite(v) => PotentialValue::Finite(v + self.harmonic.eval(y)),
            inf => inf,
        }
    }

    /// Value at a point that must not be an atom (for `d >= 2`).
    pub fn eval_finite(&self, y: &[f64]) -> Result<f64> {
        self.eval(y)
            .finite()
            .ok_or_else(|| Error::Domain(format!("test function is infinite at {y:?}")))
    }

    /// `f - pt_{Riesz measure of f}`: the harmonic part, evaluated exactly.
    pub fn weyl_part(&self, y: &[f64]) -> f64 {
        self.harmonic.eval(y)
    }
}
