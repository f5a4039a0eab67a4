//! Finite signed atomic measures.
//!
//! A [`DiscreteCharge`] is a list of weighted atoms in `R^d`. Atoms at the
//! same location (exact coordinate equality) are merged on construction and
//! atoms whose weight is zero are dropped, so every charge is stored in a
//! canonical, mutually-singular form. First-occurrence order is kept, which
//! fixes the summation order used by potential evaluation.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::{distance, Dimension};

#[derive(Clone, Debug, PartialEq)]
pub struct PointCharge {
    pub location: Vec<f64>,
    pub weight: f64,
}

impl PointCharge {
    pub fn new(location: Vec<f64>, weight: f64) -> Self {
        PointCharge { location, weight }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteCharge {
    dim: Dimension,
    atoms: Vec<PointCharge>,
}

// -0.0 and 0.0 compare equal, so they must hash equal too.
fn location_key(loc: &[f64]) -> Vec<u64> {
    loc.iter()
        .map(|&v| if v == 0.0 { 0u64 } else { v.to_bits() })
        .collect()
}

impl DiscreteCharge {
    /// Builds a charge, merging atoms at identical locations and dropping
    /// zero weights.
    pub fn new(dim: Dimension, atoms: Vec<PointCharge>) -> Result<Self> {
        let mut merged: Vec<PointCharge> = Vec::with_capacity(atoms.len());
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(atoms.len());
        for atom in atoms {
            dim.check_point(&atom.location)?;
            if atom.location.iter().any(|v| !v.is_finite()) {
                return domain("atom coordinates must be finite");
            }
            if !atom.weight.is_finite() {
                return domain("atom weights must be finite");
            }
            match index.entry(location_key(&atom.location)) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    merged[*e.get()].weight += atom.weight;
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(merged.len());
                    merged.push(atom);
                }
            }
        }
        merged.retain(|a| a.weight != 0.0);
        Ok(DiscreteCharge { dim, atoms: merged })
    }

    pub fn empty(dim: Dimension) -> Self {
        DiscreteCharge {
            dim,
            atoms: Vec::new(),
        }
    }

    /// `weight * delta_x`.
    pub fn dirac(dim: Dimension, at: Vec<f64>, weight: f64) -> Result<Self> {
        Self::new(dim, vec![PointCharge::new(at, weight)])
    }

    #[inline]
    pub fn dim(&self) -> Dimension {
        self.dim
    }

    #[inline]
    pub fn atoms(&self) -> &[PointCharge] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_positive(&self) -> bool {
        self.atoms.iter().all(|a| a.weight > 0.0)
    }

    /// `(mu+(R^d), mu-(R^d))`, each summed in atom order.
    fn variation_masses(&self) -> (f64, f64) {
        self.variation_masses_where(|_| true)
    }

    fn variation_masses_where(&self, keep: impl Fn(&PointCharge) -> bool) -> (f64, f64) {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for a in self.atoms.iter().filter(|a| keep(a)) {
            if a.weight > 0.0 {
                plus += a.weight;
            } else {
                minus -= a.weight;
            }
        }
        (plus, minus)
    }

    /// `mu(R^d) = mu+(R^d) - mu-(R^d)`. Computed from the two variations so
    /// that the Jordan identities hold bit for bit.
    pub fn total_mass(&self) -> f64 {
        let (p, m) = self.variation_masses();
        p - m
    }

    /// `|mu|(R^d) = mu+(R^d) + mu-(R^d)`.
    pub fn total_variation_mass(&self) -> f64 {
        let (p, m) = self.variation_masses();
        p + m
    }

    /// Upper and lower variations `(mu+, mu-)`, both as positive charges.
    pub fn jordan_decomposition(&self) -> (DiscreteCharge, DiscreteCharge) {
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for a in &self.atoms {
            if a.weight > 0.0 {
                plus.push(a.clone());
            } else {
                minus.push(PointCharge::new(a.location.clone(), -a.weight));
            }
        }
        (
            DiscreteCharge {
                dim: self.dim,
                atoms: plus,
            },
            DiscreteCharge {
                dim: self.dim,
                atoms: minus,
            },
        )
    }

    /// `mu(x, t)`: mass of the closed ball of radius `t` about `x`.
    pub fn ball_mass(&self, x: &[f64], t: f64) -> Result<f64> {
        self.dim.check_point(x)?;
        if !(t >= 0.0) {
            return domain(format!("ball radius must be non-negative, got {t}"));
        }
        let (p, m) = self.variation_masses_where(|a| distance(&a.location, x) <= t);
        Ok(p - m)
    }

    /// Largest distance from `origin` to an atom; 0 for the empty charge.
    pub fn support_radius(&self, origin: &[f64]) -> f64 {
        self.atoms
            .iter()
            .map(|a| distance(&a.location, origin))
            .fold(0.0, f64::max)
    }

    /// First moment `sum w_i x_i`; for `d = 1` this is `int y dmu(y)`.
    pub fn first_moment(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim.get()];
        for a in &self.atoms {
            for (mi, xi) in m.iter_mut().zip(&a.location) {
                *mi += a.weight * xi;
            }
        }
        m
    }

    /// Copy with atoms sorted lexicographically by location; two charges are
    /// the same measure iff their sorted forms are equal.
    pub fn sorted(&self) -> DiscreteCharge {
        let mut atoms = self.atoms.clone();
        atoms.sort_by(|a, b| {
            a.location
                .iter()
                .zip(&b.location)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        DiscreteCharge { dim: self.dim, atoms }
    }

    pub fn same_measure(&self, other: &DiscreteCharge) -> bool {
        self.dim == other.dim && self.sorted() == other.sorted()
    }

    pub fn scaled(&self, factor: f64) -> DiscreteCharge {
        let atoms = self
            .atoms
            .iter()
            .map(|a| PointCharge::new(a.location.clone(), a.weight * factor))
            .collect();
        // scaling can underflow weights to zero
        DiscreteCharge::new(self.dim, atoms).expect("scaling preserves validity")
    }

    pub fn negated(&self) -> DiscreteCharge {
        self.scaled(-1.0)
    }

    /// `self + other`: atom-list concatenation followed by coalescing.
    pub fn add(&self, other: &DiscreteCharge) -> Result<DiscreteCharge> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim.get(),
                found: other.dim.get(),
            });
        }
        let atoms = self.atoms.iter().chain(&other.atoms).cloned().collect();
        DiscreteCharge::new(self.dim, atoms)
    }

    pub fn sub(&self, other: &DiscreteCharge) -> Result<DiscreteCharge> {
        self.add(&other.negated())
    }

    pub fn from_json(text: &str) -> Result<DiscreteCharge> {
        let file: ChargeFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ChargeFile::from(self)).expect("charge serializes")
    }
}

/// On-disk charge format: `{"d": 2, "atoms": [{"x": [0.0, 0.0], "w": 1.0}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeFile {
    pub d: usize,
    pub atoms: Vec<AtomRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomRecord {
    pub x: Vec<f64>,
    pub w: f64,
}

impl TryFrom<ChargeFile> for DiscreteCharge {
    type Error = Error;

    fn try_from(file: ChargeFile) -> Result<Self> {
        let dim = Dimension::new(file.d)?;
        let atoms = file
            .atoms
            .into_iter()
            .map(|a| PointCharge::new(a.x, a.w))
            .collect();
        DiscreteCharge::new(dim, atoms)
    }
}

impl From<&DiscreteCharge> for ChargeFile {
    fn from(c: &DiscreteCharge) -> Self {
        ChargeFile {
            d: c.dim.get(),
            atoms: c
                .atoms
                .iter()
                .map(|a| AtomRecord {
                    x: a.location.clone(),
                    w: a.weight,
                })
                .collect(),
        }
    }
}

/// Node layout of the sphere quadrature.
///
/// In `d = 2` only `azimuth` is used (equally spaced points on the circle).
/// In `d = 3` the rule is Gauss-Legendre in the cosine of the polar angle
/// times the uniform rule in azimuth. `d = 1` always uses the two endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereRule {
    pub polar: usize,
    pub azimuth: usize,
}

impl SphereRule {
    pub fn circle(n: usize) -> Self {
        SphereRule { polar: 1, azimuth: n }
    }

    pub fn product(polar: usize, azimuth: usize) -> Self {
        SphereRule { polar, azimuth }
    }

    /// Rule with roughly `n` nodes: `n` points on a circle for `d = 2`,
    /// `p x 2p` with `2 p^2 ~ n` for `d = 3`.
    pub fn with_nodes(d: Dimension, n: usize) -> Self {
        match d.get() {
            3 => {
                let p = ((n as f64 / 2.0).sqrt().round() as usize).max(1);
                SphereRule::product(p, 2 * p)
            }
            _ => SphereRule::circle(n),
        }
    }

    /// Same layout with every direction refined by 2.
    pub fn doubled(self) -> Self {
        SphereRule {
            polar: self.polar * 2,
            azimuth: self.azimuth * 2,
        }
    }

    pub fn node_count(self, d: Dimension) -> usize {
        match d.get() {
            1 => 2,
            2 => self.azimuth,
            _ => self.polar * self.azimuth,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending nodes.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Unit direction vectors and relative weights (summing to 1) of the sphere
/// rule in dimension `d`.
pub fn sphere_nodes(d: Dimension, rule: SphereRule) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    match d.get() {
        1 => Ok((vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5])),
        2 => {
            let n = rule.azimuth;
            if n == 0 {
                return domain("circle rule needs at least one node");
            }
            let dirs = (0..n)
                .map(|k| {
                    let (s, c) = (2.0 * PI * k as f64 / n as f64).sin_cos();
                    vec![c, s]
                })
                .collect();
            Ok((dirs, vec![1.0 / n as f64; n]))
        }
        3 => {
            if rule.polar == 0 || rule.azimuth == 0 {
                return domain("sphere rule needs at least one polar and one azimuthal node");
            }
            let (ct, wt) = gauss_legendre(rule.polar);
            let na = rule.azimuth;
            let mut dirs = Vec::with_capacity(rule.polar * na);
            let mut weights = Vec::with_capacity(rule.polar * na);
            for (c, w) in ct.iter().zip(&wt) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for j in 0..na {
                    let (sp, cp) = (2.0 * PI * j as f64 / na as f64).sin_cos();
                    dirs.push(vec![s * cp, s * sp, *c]);
                    weights.push(w / (2.0 * na as f64));
                }
            }
            Ok((dirs, weights))
        }
        n => domain(format!(
            "sphere quadrature is implemented for d in 1..=3, got {n}"
        )),
    }
}

/// Sets the last weight so that the atom-order sum equals `target`.
///
/// With all weights of one sign and at least two of them, the partial sum is
/// within a factor two of `target`, so the correction is exact.
pub(crate) fn compensate_last(weights: &mut [f64], target: f64) {
    if let Some((last, rest)) = weights.split_last_mut() {
        let s: f64 = rest.iter().sum();
        *last = target - s;
    }
}

/// Quadrature realization of the uniform measure of total mass `mass` on the
/// sphere of the given radius about `center`.
pub fn uniform_sphere_measure(
    d: Dimension,
    center: &[f64],
    radius: f64,
    mass: f64,
    rule: SphereRule,
) -> Result<DiscreteCharge> {
    d.check_point(center)?;
    if !(radius > 0.0) || !radius.is_finite() {
        return domain(format!("sphere radius must be positive, got {radius}"));
    }
    let (dirs, rel) = sphere_nodes(d, rule)?;
    let mut weights: Vec<f64> = rel.iter().map(|w| w * mass).collect();
    if weights.len() > 1 {
        compensate_last(&mut weights, mass);
    }
    let atoms = dirs
        .into_iter()
        .zip(weights)
        .map(|(u, w)| {
            let loc = u.iter().zip(center).map(|(ui, ci)| ci + radius * ui).collect();
            PointCharge::new(loc, w)
        })
        .collect();
    DiscreteCharge::new(d, atoms)
}
