//! Barnes-Hut treecode for potentials of discrete charges.
//!
//! Cells are tight bounding boxes split into orthants at their midpoint
//! (a quadtree in the plane, an octree in space). A cell is replaced by its total
//! weight at its weight centroid when `diameter / r < theta`, with `r` the
//! distance from the target to the centroid and `diameter` the bounding-box
//! diagonal. Cells whose weights nearly cancel are always opened.

use rayon::prelude::*;

use super::{potential_direct, PotentialValue};
use crate::charges::DiscreteCharge;
use crate::error::{domain, Result};
use crate::kernels::{distance, radial, Dimension};

const LEAF_SIZE: usize = 16;

/// A cell with `|sum w| < CANCELLATION_RATIO * sum |w|` is never summarized.
pub const CANCELLATION_RATIO: f64 = 1e-3;

#[derive(Clone, Debug)]
struct Cell {
    diameter: f64,
    mass: f64,
    centroid: Vec<f64>,
    /// Range into `Tree::order`.
    start: usize,
    end: usize,
    children: Vec<usize>,
    summarizable: bool,
}

/// Spatial tree over the atoms of a charge, built once and shared read-only.
#[derive(Clone, Debug)]
pub struct Tree<'a> {
    charge: &'a DiscreteCharge,
    order: Vec<usize>,
    cells: Vec<Cell>,
}

impl<'a> Tree<'a> {
    pub fn build(charge: &'a DiscreteCharge) -> Self {
        let mut tree = Tree {
            charge,
            order: (0..charge.len()).collect(),
            cells: Vec::new(),
        };
        if !charge.is_empty() {
            tree.build_cell(0, charge.len());
        }
        tree
    }

    fn build_cell(&mut self, start: usize, end: usize) -> usize {
        let atoms = self.charge.atoms();
        let d = self.charge.dim().get();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut mass = 0.0;
        let mut abs_mass = 0.0;
        let mut moment = vec![0.0; d];
        for &i in &self.order[start..end] {
            let a = &atoms[i];
            for k in 0..d {
                lo[k] = lo[k].min(a.location[k]);
                hi[k] = hi[k].max(a.location[k]);
                moment[k] += a.weight * a.location[k];
            }
            mass += a.weight;
            abs_mass += a.weight.abs();
        }
        let diameter = distance(&lo, &hi);
        let summarizable = mass.abs() >= CANCELLATION_RATIO * abs_mass;
        let centroid = if summarizable {
            moment.iter().map(|m| m / mass).collect()
        } else {
            lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
        };
        let id = self.cells.len();
        self.cells.push(Cell {
            diameter,
            mass,
            centroid,
            start,
            end,
            children: Vec::new(),
            summarizable,
        });
        if end - start <= LEAF_SIZE || diameter == 0.0 {
            return id;
        }

        // orthant split at the box midpoint along every axis with extent
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let split_axes: Vec<usize> = (0..d).filter(|&k| hi[k] > lo[k]).collect();
        let orthant = |x: &[f64]| {
            split_axes.iter().enumerate().fold(0usize, |acc, (bit, &k)| {
                acc | (usize::from(x[k] >= mid[k]) << bit)
            })
        };
        self.order[start..end].sort_by_key(|&i| orthant(&atoms[i].location));
        let mut children = Vec::new();
        let mut lo_idx = start;
        while lo_idx < end {
            let key = orthant(&atoms[self.order[lo_idx]].location);
            let mut hi_idx = lo_idx + 1;
            while hi_idx < end && orthant(&atoms[self.order[hi_idx]].location) == key {
                hi_idx += 1;
            }
            children.push(self.build_cell(lo_idx, hi_idx));
            lo_idx = hi_idx;
        }
        self.cells[id].children = children;
        id
    }

    pub fn dim(&self) -> Dimension {
        self.charge.dim()
    }

    /// Potential at one target. Atoms reached without approximation are
    /// summed in atom-list order, then accepted cells are added, so with no
    /// accepted cells the result is bitwise the direct sum.
    pub fn evaluate(&self, y: &[f64], theta: f64) -> PotentialValue {
        if self.cells.is_empty() {
            return PotentialValue::Finite(0.0);
        }
        let d = self.dim();
        let mut direct: Vec<usize> = Vec::new();
        let mut far = 0.0;
        let mut approximated = false;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let cell = &self.cells[id];
            if cell.children.is_empty() {
                direct.extend_from_slice(&self.order[cell.start..cell.end]);
                continue;
            }
            if cell.summarizable {
                let dist = distance(y, &cell.centroid);
                if dist > 0.0 && cell.diameter < theta * dist {
                    far += cell.mass * radial(d, dist);
                    approximated = true;
                    continue;
                }
            }
            stack.extend(cell.children.iter().rev());
        }

        direct.sort_unstable();
        let atoms = self.charge.atoms();
        let mut near = 0.0;
        for &i in &direct {
            let t = distance(&atoms[i].location, y);
            if t == 0.0 {
                return potential_direct(self.charge, y);
            }
            near += atoms[i].weight * radial(d, t);
        }
        PotentialValue::Finite(if approximated { near + far } else { near })
    }

    pub fn evaluate_batch(&self, targets: &[Vec<f64>], theta: f64) -> Vec<PotentialValue> {
        targets.par_iter().map(|y| self.evaluate(y, theta)).collect()
    }
}

/// Treecode approximation of `potential_batch` with opening parameter
/// `theta` in `(0, 1)`.
pub fn potential_treecode(
    c: &DiscreteCharge,
    targets: &[Vec<f64>],
    theta: f64,
) -> Result<Vec<PotentialValue>> {
    if !(theta > 0.0 && theta < 1.0) {
        return domain(format!("theta must lie in (0, 1), got {theta}"));
    }
    for t in targets {
        c.dim().check_point(t)?;
    }
    Ok(Tree::build(c).evaluate_batch(targets, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charges::PointCharge;
    use crate::potentials::potential_batch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_charge(seed: u64, n: usize, d: usize, signed: bool) -> DiscreteCharge {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = (0..n)
            .map(|_| {
                let x = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
                let w = if signed { rng.gen_range(-1.0..1.0) } else { 1.0 };
                PointCharge::new(x, w)
            })
            .collect();
        DiscreteCharge::new(Dimension::new(d).unwrap(), atoms).unwrap()
    }

    fn ring_targets(seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r = rng.gen_range(2.75..5.0);
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                vec![0.5 + r * a.cos(), 0.5 + r * a.sin()]
            })
            .collect()
    }

    fn max_rel_error(a: &[PotentialValue], b: &[PotentialValue]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let (x, y) = (x.finite().unwrap(), y.finite().unwrap());
                (x - y).abs() / y.abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn rejects_bad_theta() {
        let c = random_charge(1, 10, 2, false);
        assert!(potential_treecode(&c, &[], 0.0).is_err());
        assert!(potential_treecode(&c, &[], 1.0).is_err());
        assert!(potential_treecode(&c, &[vec![0.0]], 0.5).is_err());
    }

    #[test]
    fn tiny_theta_is_bitwise_direct() {
        for (seed, signed) in [(3, false), (4, true)] {
            let c = random_charge(seed, 2000, 2, signed);
            let mut targets = ring_targets(seed, 50);
            targets.push(vec![0.5, 0.5]);
            let direct = potential_batch(&c, &targets);
            let tree = potential_treecode(&c, &targets, 1e-12).unwrap();
            for (a, b) in direct.iter().zip(&tree) {
                assert_eq!(a.finite().unwrap().to_bits(), b.finite().unwrap().to_bits());
            }
        }
    }

    #[test]
    fn single_atom_matches_direct() {
        let c = DiscreteCharge::dirac(Dimension::new(3).unwrap(), vec![0.1, 0.2, 0.3], 2.0).unwrap();
        let targets = vec![vec![5.0, 0.0, 0.0], vec![0.1, 0.2, 0.3]];
        for theta in [0.1, 0.5, 0.9] {
            assert_eq!(
                potential_treecode(&c, &targets, theta).unwrap(),
                potential_batch(&c, &targets)
            );
        }
    }

    #[test]
    fn target_on_atom_falls_back_to_direct() {
        let c = random_charge(5, 500, 2, false);
        let y = c.atoms()[17].location.clone();
        let out = potential_treecode(&c, &[y], 0.5).unwrap();
        assert_eq!(out[0], PotentialValue::MinusInfinity);
    }

    #[test]
    fn accuracy_at_half() {
        let c = random_charge(7, 10_000, 2, false);
        let targets = ring_targets(8, 1000);
        let err = max_rel_error(
            &potential_treecode(&c, &targets, 0.5).unwrap(),
            &potential_batch(&c, &targets),
        );
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn signed_and_3d_charges() {
        let c = random_charge(9, 3000, 3, true);
        let targets: Vec<Vec<f64>> = (0..100).map(|i| vec![2.0 + 0.01 * i as f64, -1.0, 0.5]).collect();
        let approx = potential_treecode(&c, &targets, 0.4).unwrap();
        let exact = potential_batch(&c, &targets);
        let scale = c.total_variation_mass() / 2.0;
        for (a, b) in approx.iter().zip(&exact) {
            assert!((a.finite().unwrap() - b.finite().unwrap()).abs() <= 1e-2 * scale);
        }
    }

    #[test]
    fn smaller_theta_is_not_worse() {
        let mut small = Vec::new();
        let mut large = Vec::new();
        for seed in 0..5 {
            let c = random_charge(100 + seed, 4000, 2, false);
            let targets = ring_targets(200 + seed, 200);
            let exact = potential_batch(&c, &targets);
            small.push(max_rel_error(
                &potential_treecode(&c, &targets, 0.3).unwrap(),
                &exact,
            ));
            large.push(max_rel_error(
                &potential_treecode(&c, &targets, 0.7).unwrap(),
                &exact,
            ));
        }
        small.sort_by(f64::total_cmp);
        large.sort_by(f64::total_cmp);
        assert!(small[2] <= large[2], "{small:?} vs {large:?}");
    }
}
