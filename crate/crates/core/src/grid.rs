//! Sampled functions on regular lattices, the second-order discrete
//! Laplacian, and Riesz-measure extraction `c_d * Laplacian(u) * h^d` per
//! lattice cell.
//!
//! Nodes within one grid step of a charge atom are flagged singular and never
//! enter a stencil. The mass hidden in a singular cluster is recovered from
//! the flux of the finite-difference gradient through a sphere enclosing the
//! cluster (Green's identity), see [`riesz_measure_extract_patched`].

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::charges::{sphere_nodes, DiscreteCharge, SphereRule};
use crate::error::{domain, Error, Result};
use crate::function::TestFunction;
use crate::kernels::{distance, riesz_normalization, unit_sphere_area, Dimension};

/// Axis-aligned computational window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl GridBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        Dimension::new(lower.len())?;
        if lower
            .iter()
            .zip(&upper)
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return domain("box corners must be finite with lower < upper on every axis");
        }
        Ok(GridBox { lower, upper })
    }

    /// `[c - half, c + half]^d`.
    pub fn cube(center: &[f64], half: f64) -> Result<Self> {
        GridBox::new(
            center.iter().map(|c| c - half).collect(),
            center.iter().map(|c| c + half).collect(),
        )
    }

    pub fn dim(&self) -> Dimension {
        Dimension::new(self.lower.len()).expect("validated on construction")
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeFlag {
    Valid,
    /// At or adjacent to a charge atom.
    Singular,
    /// No value (boundary of a stencil output, or a stencil touching a
    /// singular node).
    Invalid,
}

impl NodeFlag {
    fn as_str(self) -> &'static str {
        match self {
            NodeFlag::Valid => "valid",
            NodeFlag::Singular => "singular",
            NodeFlag::Invalid => "invalid",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    bbox: GridBox,
    h: f64,
    shape: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
    flags: Vec<NodeFlag>,
}

impl GridFunction {
    fn layout(bbox: &GridBox, h: f64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(h > 0.0) || !h.is_finite() {
            return domain(format!("grid spacing must be positive, got {h}"));
        }
        let shape: Vec<usize> = bbox
            .lower
            .iter()
            .zip(&bbox.upper)
            .map(|(a, b)| ((b - a) / h + 1e-9).floor() as usize + 1)
            .collect();
        let mut strides = vec![1; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        Ok((shape, strides))
    }

    /// Samples an arbitrary function; every node is valid.
    pub fn from_fn(bbox: GridBox, h: f64, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let (shape, strides) = Self::layout(&bbox, h)?;
        let n: usize = shape.iter().product();
        let mut g = GridFunction {
            bbox,
            h,
            shape,
            strides,
            values: Vec::new(),
            flags: vec![NodeFlag::Valid; n],
        };
        g.values = (0..n).into_par_iter().map(|i| f(&g.node(i))).collect();
        Ok(g)
    }

    pub fn dim(&self) -> Dimension {
        self.bbox.dim()
    }

    pub fn bbox(&self) -> &GridBox {
        &self.bbox
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flags(&self) -> &[NodeFlag] {
        &self.flags
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn flag(&self, i: usize) -> NodeFlag {
        self.flags[i]
    }

    pub fn set_flag(&mut self, i: usize, flag: NodeFlag) {
        self.flags[i] = flag;
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let q = i / s;
                i %= s;
                q
            })
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    /// Coordinates of node `i`: `lower + index * h`.
    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .zip(&self.bbox.lower)
            .map(|(&k, lo)| lo + k as f64 * self.h)
            .collect()
    }

    fn is_interior(&self, idx: &[usize]) -> bool {
        idx.iter().zip(&self.shape).all(|(&k, &n)| k >= 1 && k + 1 < n)
    }

    /// Indices of valid nodes.
    pub fn valid_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.flags[i] == NodeFlag::Valid)
    }

    /// `max |value|` over valid nodes (0 if there are none).
    pub fn max_abs_valid(&self) -> f64 {
        self.valid_nodes()
            .map(|i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    /// `a * self + b * other` on the same lattice. A node is valid only if it
    /// is valid in both operands.
    pub fn linear_combination(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        if self.bbox != other.bbox || self.h != other.h {
            return domain("grids must share box and spacing");
        }
        let mut out = self.clone();
        for i in 0..out.len() {
            out.values[i] = a * self.values[i] + b * other.values[i];
            out.flags[i] = match (self.flags[i], other.flags[i]) {
                (NodeFlag::Valid, NodeFlag::Valid) => NodeFlag::Valid,
                (NodeFlag::Singular, _) | (_, NodeFlag::Singular) => NodeFlag::Singular,
                _ => NodeFlag::Invalid,
            };
        }
        Ok(out)
    }

    /// CSV dump with header `x1,...,xd,value,flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.dim().get();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("value".into());
        header.push("flag".into());
        w.write_record(&header).map_err(csv_error)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.node(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.values[i]));
            rec.push(self.flags[i].as_str().into());
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Central-difference gradient at node `i`, if the node and all its
    /// axis neighbours are valid.
    fn node_gradient(&self, i: usize) -> Option<Vec<f64>> {
        let idx = self.multi_index(i);
        if !self.is_interior(&idx) || self.flags[i] != NodeFlag::Valid {
            return None;
        }
        let mut grad = Vec::with_capacity(idx.len());
        for s in &self.strides {
            let (p, m) = (i + s, i - s);
            if self.flags[p] != NodeFlag::Valid || self.flags[m] != NodeFlag::Valid {
                return None;
            }
            grad.push((self.values[p] - self.values[m]) / (2.0 * self.h));
        }
        Some(grad)
    }

    /// Multilinear interpolation of the node gradients to an arbitrary point.
    pub fn gradient_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim().get();
        let mut base = Vec::with_capacity(d);
        let mut frac = Vec::with_capacity(d);
        for (k, xk) in x.iter().enumerate().take(d) {
            let s = (xk - self.bbox.lower[k]) / self.h;
            if !(s >= 0.0) {
                return None;
            }
            let b = (s.floor() as usize).min(self.shape[k].saturating_sub(2));
            base.push(b);
            frac.push(s - b as f64);
        }
        let mut grad = vec![0.0; d];
        for corner in 0..(1usize << d) {
            let mut idx = base.clone();
            let mut weight = 1.0;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    idx[k] += 1;
                    weight *= frac[k];
                } else {
                    weight *= 1.0 - frac[k];
                }
            }
            if idx.iter().zip(&self.shape).any(|(a, n)| a >= n) {
                return None;
            }
            let g = self.node_gradient(self.flat_index(&idx))?;
            for k in 0..d {
                grad[k] += weight * g[k];
            }
        }
        Some(grad)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Samples a test function exactly; nodes within distance `h` of an atom are
/// flagged singular.
pub fn sample(f: &TestFunction, bbox: &GridBox, h: f64) -> Result<GridFunction> {
    if bbox.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim().get(),
            found: bbox.dim().get(),
        });
    }
    let mut g = GridFunction::from_fn(bbox.clone(), h, |y| f.eval(y).to_extended().value())?;
    let atoms = f.charge.atoms();
    if !atoms.is_empty() {
        let near: Vec<bool> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let y = g.node(i);
                atoms.iter().any(|a| distance(&a.location, &y) <= h)
            })
            .collect();
        for (flag, n) in g.flags.iter_mut().zip(near) {
            if n {
                *flag = NodeFlag::Singular;
            }
        }
    }
    Ok(g)
}

/// `(2d+1)`-point Laplacian on stencil-complete interior nodes.
pub fn discrete_laplacian(g: &GridFunction) -> Result<GridFunction> {
    if g.shape.iter().any(|&n| n < 3) {
        return domain("discrete Laplacian needs at least 3 nodes per axis");
    }
    let h2 = g.h * g.h;
    let computed: Vec<(f64, NodeFlag)> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let idx = g.multi_index(i);
            if !g.is_interior(&idx) || g.flags[i] != NodeFlag::Valid {
                return (f64::NAN, NodeFlag::Invalid);
            }
            let c = g.values[i];
            let mut sum = 0.0;
            for s in &g.strides {
                let (p, m) = (i + s, i - s);
                if g.flags[p] != NodeFlag::Valid || g.flags[m] != NodeFlag::Valid {
                    return (f64::NAN, NodeFlag::Invalid);
                }
                sum += (g.values[p] - 2.0 * c + g.values[m]) / h2;
            }
            (sum, NodeFlag::Valid)
        })
        .collect();
    let mut out = g.clone();
    for (i, (v, f)) in computed.into_iter().enumerate() {
        out.values[i] = v;
        out.flags[i] = f;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassCell {
    pub center: Vec<f64>,
    pub mass: f64,
}

/// Mass of a singular cluster, measured by the flux through a sphere.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FluxPatch {
    pub center: Vec<f64>,
    pub radius: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtractedMeasure {
    pub cells: Vec<MassCell>,
    pub patches: Vec<FluxPatch>,
}

impl ExtractedMeasure {
    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.mass).sum::<f64>() + self.patches.iter().map(|p| p.mass).sum::<f64>()
    }

    /// Mass of cells and patches whose centers lie in the closed ball.
    pub fn mass_in_ball(&self, center: &[f64], radius: f64) -> f64 {
        self.cells
            .iter()
            .filter(|c| distance(&c.center, center) <= radius)
            .map(|c| c.mass)
            .sum::<f64>()
            + self
                .patches
                .iter()
                .filter(|p| distance(&p.center, center) <= radius)
                .map(|p| p.mass)
                .sum::<f64>()
    }

    /// The cell masses as an atomic charge.
    pub fn to_charge(&self, dim: Dimension) -> Result<DiscreteCharge> {
        let atoms = self
            .cells
            .iter()
            .map(|c| (c.center.clone(), c.mass))
            .chain(self.patches.iter().map(|p| (p.center.clone(), p.mass)))
            .map(|(x, w)| crate::charges::PointCharge::new(x, w))
            .collect();
        DiscreteCharge::new(dim, atoms)
    }
}

/// Per valid node: `c_d * (discrete Laplacian) * h^d`.
pub fn riesz_measure_extract(g: &GridFunction) -> Result<ExtractedMeasure> {
    let lap = discrete_laplacian(g)?;
    let scale = riesz_normalization(g.dim()) * g.h.powi(g.dim().get() as i32);
    let cells = lap
        .valid_nodes()
        .map(|i| MassCell {
            center: lap.node(i),
            mass: scale * lap.values[i],
        })
        .collect();
    Ok(ExtractedMeasure {
        cells,
        patches: Vec::new(),
    })
}

/// `c_d` times the flux of the finite-difference gradient through the sphere
/// of the given radius; by Green's identity this is the Riesz mass inside.
pub fn flux_mass(g: &GridFunction, center: &[f64], radius: f64, rule: SphereRule) -> Result<f64> {
    let d = g.dim();
    d.check_point(center)?;
    if !(radius > 0.0) {
        return domain("flux sphere radius must be positive");
    }
    let (dirs, weights) = sphere_nodes(d, rule)?;
    let area = unit_sphere_area(d) * radius.powi(d.get() as i32 - 1);
    let mut flux = 0.0;
    for (u, w) in dirs.iter().zip(&weights) {
        let x: Vec<f64> = u.iter().zip(center).map(|(ui, ci)| ci + radius * ui).collect();
        let grad = g.gradient_at(&x).ok_or_else(|| {
            Error::Domain(format!(
                "flux sphere (radius {radius}) leaves the region with a valid gradient at {x:?}"
            ))
        })?;
        let normal: f64 = grad.iter().zip(u).map(|(a, b)| a * b).sum();
        flux += w * normal;
    }
    Ok(riesz_normalization(d) * area * flux)
}

/// Connected clusters (including diagonal neighbours) of singular nodes.
fn singular_clusters(g: &GridFunction) -> Vec<Vec<usize>> {
    let d = g.dim().get();
    let mut seen = vec![false; g.len()];
    let mut clusters = Vec::new();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as i64 - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| o.iter().any(|&v| v != 0))
        .collect();
    for start in 0..g.len() {
        if seen[start] || g.flags[start] != NodeFlag::Singular {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut cluster = Vec::new();
        while let Some(i) = stack.pop() {
            cluster.push(i);
            let idx = g.multi_index(i);
            for off in &offsets {
                let nb: Option<Vec<usize>> = idx
                    .iter()
                    .zip(off)
                    .zip(&g.shape)
                    .map(|((&a, &o), &n)| {
                        let v = a as i64 + o;
                        (v >= 0 && (v as usize) < n).then_some(v as usize)
                    })
                    .collect();
                if let Some(nb) = nb {
                    let j = g.flat_index(&nb);
                    if !seen[j] && g.flags[j] == NodeFlag::Singular {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        cluster.sort_unstable();
        clusters.push(cluster);
    }
    clusters
}

/// Riesz extraction with singular clusters replaced by flux patches.
///
/// Each cluster of singular nodes is enclosed in a sphere of radius at least
/// `min_patch_radius` and large enough for every gradient sample on it to
/// avoid the cluster; the patch mass is the flux through that sphere, and the
/// regular cells inside the sphere are dropped. Overlapping patches are
/// merged.
pub fn riesz_measure_extract_patched(
    g: &GridFunction,
    min_patch_radius: f64,
    rule: SphereRule,
) -> Result<ExtractedMeasure> {
    let base = riesz_measure_extract(g)?;
    let d = g.dim().get();
    let margin = ((d as f64).sqrt() + 2.0) * g.h;

    let mut groups: Vec<Vec<usize>> = singular_clusters(g);
    let enclose = |group: &Vec<usize>| -> (Vec<f64>, f64) {
        let mut c = vec![0.0; d];
        for &i in group {
            for (ck, xk) in c.iter_mut().zip(g.node(i)) {
                *ck += xk;
            }
        }
        c.iter_mut().for_each(|v| *v /= group.len() as f64);
        let extent = group
            .iter()
            .map(|&i| distance(&g.node(i), &c))
            .fold(0.0, f64::max);
        let r = (extent + margin).max(min_patch_radius);
        (c, r)
    };
    loop {
        let spheres: Vec<(Vec<f64>, f64)> = groups.iter().map(enclose).collect();
        let overlap = (0..spheres.len()).find_map(|a| {
            (a + 1..spheres.len())
                .find(|&b| distance(&spheres[a].0, &spheres[b].0) < spheres[a].1 + spheres[b].1)
                .map(|b| (a, b))
        });
        match overlap {
            Some((a, b)) => {
                let merged = groups.remove(b);
                groups[a].extend(merged);
            }
            None => break,
        }
    }

    let mut patches = Vec::with_capacity(groups.len());
    for group in &groups {
        let (center, radius) = enclose(group);
        let mass = flux_mass(g, &center, radius, rule)?;
        patches.push(FluxPatch { center, radius, mass });
    }
    let cells = base
        .cells
        .into_iter()
        .filter(|c| patches.iter().all(|p| distance(&c.center, &p.center) >= p.radius))
        .collect();
    Ok(ExtractedMeasure { cells, patches })
}

/// Harmonic part `f - pt_{charge of f}` sampled on a grid, with its
/// harmonicity defect.
#[derive(Clone, Debug)]
pub struct WeylResidual {
    pub grid: GridFunction,
    /// `max |discrete Laplacian|` over valid nodes.
    pub defect: f64,
}

pub fn weyl_residual(f: &TestFunction, bbox: &GridBox, h: f64) -> Result<WeylResidual> {
    if bbox.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim().get(),
            found: bbox.dim().get(),
        });
    }
    let grid = GridFunction::from_fn(bbox.clone(), h, |y| f.weyl_part(y))?;
    let defect = discrete_laplacian(&grid)?.max_abs_valid();
    Ok(WeylResidual { grid, defect })
}

/// Canonical pair of a delta-subharmonic function `w = P - Q` at atomic
/// resolution: the Riesz measures of `P` and `Q` are the upper and lower
/// variations of the Riesz charge of `w`.
pub fn delta_subharmonic_decompose(w_charge: &DiscreteCharge) -> (DiscreteCharge, DiscreteCharge) {
    w_charge.jordan_decomposition()
}

/// Riesz measure of the auxiliary subharmonic `s` with `p = P + s`:
/// `Delta_p - Delta_w^+`.
pub fn auxiliary_charge(p_charge: &DiscreteCharge, w_plus: &DiscreteCharge) -> Result<DiscreteCharge> {
    p_charge.sub(w_plus)
}
