//! Harmonic measure, Green's function and the Poisson-Jensen identity for
//! balls in `R^2` and `R^3`.
//!
//! The harmonic measure `omega_B(x, .)` is the Poisson kernel times the
//! sphere quadrature of [`crate::charges::sphere_nodes`], renormalized to a
//! probability measure. The Green's function is then the potential of the
//! charge `omega_B(x, .) - delta_x`:
//!
//! ```text
//! g_B(y, x) = pt_omega(y) - K_{d-2}(y, x)
//! ```

use serde::Serialize;

use crate::charges::{compensate_last, sphere_nodes, DiscreteCharge, PointCharge, SphereRule};
use crate::error::{domain, Error, Result};
use crate::function::TestFunction;
use crate::kernels::{distance, radial, unit_sphere_area, Dimension};
use crate::potentials::potential_direct;

/// Tiny negative Green values outside the ball are quadrature noise.
pub const NEGATIVE_CLAMP: f64 = 1e-9;

const SPHERE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallDomain {
    dim: Dimension,
    center: Vec<f64>,
    radius: f64,
}

impl BallDomain {
    pub fn new(dim: Dimension, center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(2..=3).contains(&dim.get()) {
            return domain(format!("ball domains are supported for d = 2, 3; got {dim}"));
        }
        dim.check_point(&center)?;
        if !(radius > 0.0) || !radius.is_finite() {
            return domain(format!("ball radius must be positive, got {radius}"));
        }
        Ok(BallDomain { dim, center, radius })
    }

    pub fn unit(dim: Dimension) -> Result<Self> {
        BallDomain::new(dim, vec![0.0; dim.get()], 1.0)
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        distance(x, &self.center) < self.radius
    }

    fn check_interior(&self, x: &[f64]) -> Result<()> {
        self.dim.check_point(x)?;
        if !self.contains_open(x) {
            return domain(format!("{x:?} is not an interior point of the ball"));
        }
        Ok(())
    }

    /// Area of the bounding sphere.
    pub fn surface_area(&self) -> f64 {
        unit_sphere_area(self.dim) * self.radius.powi(self.dim.get() as i32 - 1)
    }
}

/// Poisson kernel `(R^2 - |x-c|^2) / (omega_d R |x - zeta|^d)`, the density
/// of the harmonic measure with respect to surface measure.
pub fn poisson_kernel(b: &BallDomain, x: &[f64], zeta: &[f64]) -> Result<f64> {
    b.check_interior(x)?;
    b.dim.check_point(zeta)?;
    let r = b.radius;
    if (distance(zeta, &b.center) - r).abs() > SPHERE_TOL * r {
        return domain(format!("{zeta:?} is not on the boundary sphere"));
    }
    Ok(poisson_unchecked(b, x, zeta))
}

fn poisson_unchecked(b: &BallDomain, x: &[f64], zeta: &[f64]) -> f64 {
    let r = b.radius;
    let dx = distance(x, &b.center);
    let d = b.dim.get() as i32;
    (r * r - dx * dx) / (unit_sphere_area(b.dim) * r * distance(x, zeta).powi(d))
}

/// Quadrature realization of `omega_B(x, .)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicMeasure {
    pub base: Vec<f64>,
    pub charge: DiscreteCharge,
    pub rule: SphereRule,
}

impl HarmonicMeasure {
    /// `int f d omega`, summed in atom order.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.charge
            .atoms()
            .iter()
            .map(|a| a.weight * f(&a.location))
            .sum()
    }
}

pub fn harmonic_measure(b: &BallDomain, x: &[f64], rule: SphereRule) -> Result<HarmonicMeasure> {
    b.check_interior(x)?;
    if rule.node_count(b.dim) < 4 {
        return domain("harmonic measure needs at least 4 quadrature nodes");
    }
    let (dirs, rel) = sphere_nodes(b.dim, rule)?;
    let area = b.surface_area();
    let nodes: Vec<Vec<f64>> = dirs
        .iter()
        .map(|u| {
            u.iter()
                .zip(&b.center)
                .map(|(ui, ci)| ci + b.radius * ui)
                .collect()
        })
        .collect();
    let mut weights: Vec<f64> = nodes
        .iter()
        .zip(&rel)
        .map(|(z, w)| poisson_unchecked(b, x, z) * w * area)
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    compensate_last(&mut weights, 1.0);
    let atoms = nodes
        .into_iter()
        .zip(weights)
        .map(|(z, w)| PointCharge::new(z, w))
        .collect();
    Ok(HarmonicMeasure {
        base: x.to_vec(),
        charge: DiscreteCharge::new(b.dim, atoms)?,
        rule,
    })
}

/// `g_B(., x)` for a fixed pole, with the harmonic measure built once.
#[derive(Clone, Debug)]
pub struct BallGreen {
    ball: BallDomain,
    omega: HarmonicMeasure,
}

impl BallGreen {
    pub fn new(b: &BallDomain, x: &[f64], rule: SphereRule) -> Result<Self> {
        Ok(BallGreen {
            ball: b.clone(),
            omega: harmonic_measure(b, x, rule)?,
        })
    }

    pub fn pole(&self) -> &[f64] {
        &self.omega.base
    }

    pub fn harmonic_measure(&self) -> &HarmonicMeasure {
        &self.omega
    }

    /// `pt_omega(y) - K(y, x)`; `+inf` at the pole.
    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        self.ball.dim.check_point(y)?;
        let x = self.pole();
        let t = distance(y, x);
        if t == 0.0 {
            return Ok(f64::INFINITY);
        }
        let pt = potential_direct(&self.omega.charge, y).finite().ok_or_else(|| {
            Error::Domain(format!("{y:?} coincides with a harmonic-measure quadrature node"))
        })?;
        let g = pt - radial(self.ball.dim, t);
        let outside = distance(y, &self.ball.center) > self.ball.radius;
        if outside && (-NEGATIVE_CLAMP..0.0).contains(&g) {
            return Ok(0.0);
        }
        Ok(g)
    }
}

pub fn green_function(b: &BallDomain, y: &[f64], x: &[f64], rule: SphereRule) -> Result<f64> {
    BallGreen::new(b, x, rule)?.eval(y)
}

/// `|u(x) - (int u d omega_B(x, .) - sum_{atoms in B} w_i g_B(x_i, x))|`.
pub fn poisson_jensen_residual(u: &TestFunction, b: &BallDomain, x: &[f64], rule: SphereRule) -> Result<f64> {
    if u.dim() != b.dim {
        return Err(Error::DimensionMismatch {
            expected: b.dim.get(),
            found: u.dim().get(),
        });
    }
    b.check_interior(x)?;
    for a in u.charge.atoms() {
        let r = distance(&a.location, &b.center);
        if (r - b.radius).abs() <= 1e-12 * b.radius {
            return domain("boundary atom unsupported: a charge atom lies on the sphere");
        }
    }
    let ux = u.eval_finite(x)?;
    let green = BallGreen::new(b, x, rule)?;
    let mut boundary_values = Vec::with_capacity(green.omega.charge.len());
    for a in green.omega.charge.atoms() {
        boundary_values.push(u.eval_finite(&a.location)?);
    }
    let mean: f64 = green
        .omega
        .charge
        .atoms()
        .iter()
        .zip(&boundary_values)
        .map(|(a, v)| a.weight * v)
        .sum();
    let mut green_term = 0.0;
    for a in u.charge.atoms().iter().filter(|a| b.contains_open(&a.location)) {
        green_term += a.weight * green.eval(&a.location)?;
    }
    Ok((ux - (mean - green_term)).abs())
}
