//! Numerical harness for the uniqueness theorem: if two subharmonic functions
//! `p`, `q` are harmonic outside a compact set and agree on `O \ S`, then
//! their Riesz measures carry the same mass on `O`, their potentials agree
//! off `S`, and `p - pt_{Delta_p} = q - pt_{Delta_q}` on `O`.
//!
//! `S` is always a closed ball and `O` a box. Sample points come from a
//! counter-based generator (one ChaCha stream per sample index), so the sample
//! set depends only on the seed and never on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::charges::{uniform_sphere_measure, DiscreteCharge, SphereRule};
use crate::error::{domain, Error, Result};
use crate::function::{HarmonicPoly, TestFunction};
use crate::grid::{discrete_laplacian, GridBox, GridFunction, NodeFlag};
use crate::kernels::{distance, Dimension};
use crate::potentials::{potential_direct, potential_line_closed_form};

/// Quadrature error the shell fixture's exclusion ball is sized for.
const SHELL_ALIASING: f64 = 1e-14;

/// Stream offset that separates interior samples from exterior ones.
const INTERIOR_STREAM: u64 = 1 << 62;

#[derive(Clone, Debug, PartialEq)]
pub struct UniquenessInstance {
    pub p: TestFunction,
    pub q: TestFunction,
    pub s_center: Vec<f64>,
    pub s_radius: f64,
    pub window: GridBox,
}

impl UniquenessInstance {
    /// Checks `supp Delta_p ∪ supp Delta_q ⊂ S ⊂ int O`.
    pub fn new(
        p: TestFunction,
        q: TestFunction,
        s_center: Vec<f64>,
        s_radius: f64,
        window: GridBox,
    ) -> Result<Self> {
        let d = p.dim();
        for dim in [q.dim(), window.dim()] {
            if dim != d {
                return Err(Error::DimensionMismatch {
                    expected: d.get(),
                    found: dim.get(),
                });
            }
        }
        d.check_point(&s_center)?;
        if !(s_radius > 0.0) || !s_radius.is_finite() {
            return domain(format!("S radius must be positive, got {s_radius}"));
        }
        let slack = s_radius * (1.0 + 1e-12);
        for a in p.charge.atoms().iter().chain(q.charge.atoms()) {
            if distance(&a.location, &s_center) > slack {
                return domain(format!("atom at {:?} lies outside S", a.location));
            }
        }
        let inside = (0..d.get()).all(|i| {
            window.lower()[i] < s_center[i] - s_radius && s_center[i] + s_radius < window.upper()[i]
        });
        if !inside {
            return domain("S must lie in the interior of the window");
        }
        Ok(UniquenessInstance {
            p,
            q,
            s_center,
            s_radius,
            window,
        })
    }

    pub fn dim(&self) -> Dimension {
        self.p.dim()
    }

    fn in_s(&self, y: &[f64]) -> bool {
        distance(y, &self.s_center) <= self.s_radius
    }

    fn draw_in_window(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.window
            .lower()
            .iter()
            .zip(self.window.upper())
            .map(|(a, b)| rng.gen_range(*a..*b))
            .collect()
    }

    /// The `i`-th exterior sample, uniform on `O \ S`.
    pub fn exterior_sample(&self, seed: u64, i: u64) -> Vec<f64> {
        let mut rng = stream(seed, i);
        loop {
            let y = self.draw_in_window(&mut rng);
            if !self.in_s(&y) {
                return y;
            }
        }
    }

    /// The `i`-th interior sample, uniform on `O`.
    pub fn interior_sample(&self, seed: u64, i: u64) -> Vec<f64> {
        let mut rng = stream(seed, INTERIOR_STREAM + i);
        self.draw_in_window(&mut rng)
    }
}

fn stream(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

/// Parallel max over sample indices; `max` is order-free so the result does
/// not depend on scheduling.
fn max_over(samples: usize, f: impl Fn(u64) -> f64 + Sync + Send) -> f64 {
    (0..samples as u64)
        .into_par_iter()
        .map(f)
        .reduce(|| 0.0, f64::max)
}

/// `max |p(y) - q(y)|` over `samples` seeded points of `O \ S`.
pub fn verify_hypothesis(inst: &UniquenessInstance, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return domain("at least one sample is required");
    }
    Ok(max_over(samples, |i| {
        let y = inst.exterior_sample(seed, i);
        let p = inst.p.eval_finite(&y).expect("exterior samples avoid the atoms");
        let q = inst.q.eval_finite(&y).expect("exterior samples avoid the atoms");
        (p - q).abs()
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub check: &'static str,
    pub mass_p: f64,
    pub mass_q: f64,
    pub mass_gap: f64,
    pub equality_defect: f64,
    pub potential_defect: f64,
    #[serde(rename = "H_defect")]
    pub h_defect: f64,
    pub hypothesis_ok: bool,
    pub tolerance: f64,
    pub pass: bool,
}

impl UniquenessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Evaluates the three conclusions. They are only asserted (`pass`) when the
/// hypothesis defect is within `tol`.
pub fn check_conclusions(
    inst: &UniquenessInstance,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<UniquenessReport> {
    if !(tol >= 0.0) {
        return domain(format!("tolerance must be non-negative, got {tol}"));
    }
    let equality_defect = verify_hypothesis(inst, samples, seed)?;
    let hypothesis_ok = equality_defect <= tol;

    // Every atom lies in S and S lies inside O, so Delta(O) is the total mass.
    let mass_p = inst.p.charge.total_mass();
    let mass_q = inst.q.charge.total_mass();
    let mass_gap = (mass_q - mass_p).abs();

    let potential_defect = max_over(samples, |i| {
        let y = inst.exterior_sample(seed, i);
        let a = potential_direct(&inst.p.charge, &y)
            .finite()
            .expect("off the atoms");
        let b = potential_direct(&inst.q.charge, &y)
            .finite()
            .expect("off the atoms");
        (a - b).abs()
    });
    let h_defect = max_over(samples, |i| {
        let y = inst.interior_sample(seed, i);
        (inst.p.weyl_part(&y) - inst.q.weyl_part(&y)).abs()
    });

    let pass = hypothesis_ok && mass_gap <= tol && potential_defect <= tol && h_defect <= tol;
    Ok(UniquenessReport {
        check: "uniqueness",
        mass_p,
        mass_q,
        mass_gap,
        equality_defect,
        potential_defect,
        h_defect,
        hypothesis_ok,
        tolerance: tol,
        pass,
    })
}

/// Default conclusion tolerance per dimension, matched to the shell fixture.
pub fn default_tolerance(d: Dimension) -> f64 {
    match d.get() {
        1 => 1e-12,
        2 => 1e-8,
        _ => 1e-5,
    }
}

/// Recovered harmonic part on a grid.
#[derive(Clone, Debug)]
pub struct RecoveredHarmonic {
    /// `p - pt_{Delta_p}` computed numerically; nodes within `h` of an atom
    /// of either function are flagged singular.
    pub grid: GridFunction,
    /// `max |discrete Laplacian|` over valid nodes.
    pub harmonicity_defect: f64,
    /// `max |(p - pt_p) - (q - pt_q)|` over non-singular nodes.
    pub agreement: f64,
    /// `max |grid - H|` for a planted `H`.
    pub planted_deviation: Option<f64>,
}

pub fn recover_common_h(
    inst: &UniquenessInstance,
    bbox: &GridBox,
    h: f64,
    planted: Option<&HarmonicPoly>,
) -> Result<RecoveredHarmonic> {
    if bbox.dim() != inst.dim() {
        return Err(Error::DimensionMismatch {
            expected: inst.dim().get(),
            found: bbox.dim().get(),
        });
    }
    if let Some(hp) = planted {
        if hp.dim() != inst.dim() {
            return Err(Error::DimensionMismatch {
                expected: inst.dim().get(),
                found: hp.dim().get(),
            });
        }
    }
    let residual =
        |f: &TestFunction, y: &[f64]| match (f.eval(y).finite(), potential_direct(&f.charge, y).finite()) {
            (Some(v), Some(pt)) => v - pt,
            _ => f64::NAN,
        };
    let mut grid = GridFunction::from_fn(bbox.clone(), h, |y| residual(&inst.p, y))?;
    let atoms: Vec<&[f64]> = inst
        .p
        .charge
        .atoms()
        .iter()
        .chain(inst.q.charge.atoms())
        .map(|a| a.location.as_slice())
        .collect();
    let other: Vec<(bool, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let y = grid.node(i);
            let near = atoms.iter().any(|a| distance(a, &y) <= h);
            (near, residual(&inst.q, &y))
        })
        .collect();
    let mut agreement = 0.0f64;
    let mut planted_deviation = planted.map(|_| 0.0f64);
    for (i, (near, q_val)) in other.into_iter().enumerate() {
        if near || !grid.value(i).is_finite() {
            grid.set_flag(i, NodeFlag::Singular);
            continue;
        }
        agreement = agreement.max((grid.value(i) - q_val).abs());
        if let (Some(dev), Some(hp)) = (planted_deviation.as_mut(), planted) {
            *dev = dev.max((grid.value(i) - hp.eval(&grid.node(i))).abs());
        }
    }
    let harmonicity_defect = discrete_laplacian(&grid)?.max_abs_valid();
    Ok(RecoveredHarmonic {
        grid,
        harmonicity_defect,
        agreement,
        planted_deviation,
    })
}

/// The d = 1 constant in `p - q = pt_p - pt_q + C`, evaluated at both ends of
/// the window with the closed-form line potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineConstants {
    pub left: f64,
    pub right: f64,
}

impl LineConstants {
    pub fn spread(&self) -> f64 {
        (self.left - self.right).abs()
    }
}

pub fn line_constants(inst: &UniquenessInstance) -> Result<LineConstants> {
    if inst.dim().get() != 1 {
        return domain("constant elimination is a d = 1 computation");
    }
    let at = |x: f64| -> Result<f64> {
        let p = inst.p.eval_finite(&[x])? - potential_line_closed_form(&inst.p.charge, x)?;
        let q = inst.q.eval_finite(&[x])? - potential_line_closed_form(&inst.q.charge, x)?;
        Ok(p - q)
    };
    Ok(LineConstants {
        left: at(inst.window.lower()[0])?,
        right: at(inst.window.upper()[0])?,
    })
}

/// Radius factor for the exclusion ball of the shell fixture. A discrete
/// shell with an exact rule up to degree `L` matches the point mass outside
/// radius `rho r` up to about `rho^{-L}`.
pub fn shell_collar(d: Dimension, rule: SphereRule) -> f64 {
    let exact_degree = match d.get() {
        1 => return 1.0,
        2 => rule.azimuth,
        _ => (2 * rule.polar).min(rule.azimuth),
    };
    (SHELL_ALIASING.recip().ln() / exact_degree as f64).exp()
}

/// `p = pt_{uniform sphere} + H` against `q = pt_{mass delta_0} + H`, with
/// `S` the shell's ball widened by [`shell_collar`] and `O` the cube with a
/// margin of `2r` around the shell (more when a coarse rule widens `S`).
pub fn build_shell_delta_instance(
    d: Dimension,
    r: f64,
    mass: f64,
    h_coeffs: &[f64],
    rule: SphereRule,
) -> Result<UniquenessInstance> {
    if !(r > 0.0) || !r.is_finite() {
        return domain(format!("shell radius must be positive, got {r}"));
    }
    let center = vec![0.0; d.get()];
    let harmonic = HarmonicPoly::from_coeffs(d, h_coeffs)?;
    let shell = uniform_sphere_measure(d, &center, r, mass, rule)?;
    let point = DiscreteCharge::dirac(d, center.clone(), mass)?;
    let p = TestFunction::new(shell, harmonic.clone())?;
    let q = TestFunction::new(point, harmonic)?;
    let s_radius = r * shell_collar(d, rule);
    let window = GridBox::cube(&center, (3.0 * r).max(s_radius + 2.0 * r))?;
    UniquenessInstance::new(p, q, center, s_radius, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::HarmonicTerm;

    fn dim(d: usize) -> Dimension {
        Dimension::new(d).unwrap()
    }

    fn rule_for(d: usize) -> SphereRule {
        match d {
            2 => SphereRule::circle(512),
            _ => SphereRule::product(32, 64),
        }
    }

    #[test]
    fn identical_functions_have_zero_defects() {
        let c = DiscreteCharge::dirac(dim(2), vec![0.1, 0.0], 1.5).unwrap();
        let f = TestFunction::new(c, HarmonicPoly::from_coeffs(dim(2), &[1.0, 2.0]).unwrap()).unwrap();
        let inst = UniquenessInstance::new(
            f.clone(),
            f,
            vec![0.0, 0.0],
            0.5,
            GridBox::cube(&[0.0, 0.0], 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(verify_hypothesis(&inst, 200, 3).unwrap(), 0.0);
        let rep = check_conclusions(&inst, 200, 3, 0.0).unwrap();
        assert_eq!(
            (rep.mass_gap, rep.potential_defect, rep.h_defect),
            (0.0, 0.0, 0.0)
        );
        assert!(rep.pass);
    }

    #[test]
    fn line_shell_is_the_midpoint_average() {
        let inst = build_shell_delta_instance(dim(1), 1.0, 1.0, &[], SphereRule::circle(2)).unwrap();
        for x in [-3.0, -1.0, 1.0, 1.7, 2.5] {
            let p = inst.p.eval_finite(&[x]).unwrap();
            let oracle = ((x - 1.0f64).abs() + (x + 1.0f64).abs()) / 2.0;
            assert!((p - oracle).abs() <= 1e-15);
            assert!((p - inst.q.eval_finite(&[x]).unwrap()).abs() <= 1e-15);
        }
        // Inside the shell they differ.
        assert!((inst.p.eval_finite(&[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(inst.q.eval_finite(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn shell_instances_pass_at_default_tolerance() {
        for d in 1..=3 {
            let inst = build_shell_delta_instance(dim(d), 0.5, 1.0, &[0.3, -1.0], rule_for(d)).unwrap();
            let tol = default_tolerance(dim(d));
            let rep = check_conclusions(&inst, 500, 11, tol).unwrap();
            assert_eq!(rep.mass_gap, 0.0, "d={d}");
            assert!(rep.pass, "d={d}: {rep:?}");
        }
    }

    #[test]
    fn planar_shell_hypothesis_is_tight() {
        let inst = build_shell_delta_instance(dim(2), 0.5, 1.0, &[], SphereRule::circle(512)).unwrap();
        assert!(verify_hypothesis(&inst, 2000, 5).unwrap() <= 1e-10);
    }

    #[test]
    fn collar_is_needed_near_the_shell() {
        // Just outside the bare shell the quadrature shows through.
        let inst = build_shell_delta_instance(dim(2), 0.5, 1.0, &[], SphereRule::circle(512)).unwrap();
        let y = [0.505, 0.0];
        let gap = (inst.p.eval_finite(&y).unwrap() - inst.q.eval_finite(&y).unwrap()).abs();
        assert!(gap > 1e-8, "{gap}");
        assert!(inst.s_radius > 0.505);
    }

    #[test]
    fn negative_controls_are_flagged() {
        for d in 1..=3 {
            let dd = dim(d);
            let delta = DiscreteCharge::dirac(dd, vec![0.0; d], 1.0).unwrap();
            let window = GridBox::cube(&vec![0.0; d], 1.5).unwrap();
            let shifted = TestFunction::new(
                delta.clone(),
                HarmonicPoly::new(dd, vec![(HarmonicTerm::Linear(0), 1.0)]).unwrap(),
            )
            .unwrap();
            let plain = TestFunction::potential(delta.clone());
            let doubled = TestFunction::potential(delta.scaled(2.0));
            for (p, q) in [(shifted, plain.clone()), (plain, doubled)] {
                let inst = UniquenessInstance::new(p, q, vec![0.0; d], 0.5, window.clone()).unwrap();
                let rep = check_conclusions(&inst, 300, 1, default_tolerance(dd)).unwrap();
                assert!(!rep.hypothesis_ok && !rep.pass, "d={d}: {rep:?}");
                assert!(rep.equality_defect > 0.1);
            }
        }
    }

    #[test]
    fn linear_control_keeps_equal_masses() {
        let d = dim(2);
        let delta = DiscreteCharge::dirac(d, vec![0.0, 0.0], 1.0).unwrap();
        let p = TestFunction::new(
            delta.clone(),
            HarmonicPoly::new(d, vec![(HarmonicTerm::Linear(0), 1.0)]).unwrap(),
        )
        .unwrap();
        let inst = UniquenessInstance::new(
            p,
            TestFunction::potential(delta),
            vec![0.0, 0.0],
            0.5,
            GridBox::cube(&[0.0, 0.0], 1.5).unwrap(),
        )
        .unwrap();
        let rep = check_conclusions(&inst, 100, 2, 1e-8).unwrap();
        assert_eq!(rep.mass_gap, 0.0);
        assert!(!rep.pass);
    }

    #[test]
    fn samples_are_reproducible_and_exterior() {
        let inst = build_shell_delta_instance(dim(3), 0.5, 1.0, &[], SphereRule::product(8, 16)).unwrap();
        for i in 0..50 {
            let a = inst.exterior_sample(9, i);
            assert_eq!(a, inst.exterior_sample(9, i));
            assert!(distance(&a, &[0.0; 3]) > inst.s_radius);
            assert!(inst.window.contains(&a));
        }
        assert_ne!(inst.exterior_sample(9, 0), inst.exterior_sample(10, 0));
        assert_ne!(inst.exterior_sample(9, 0), inst.interior_sample(9, 0));
    }

    #[test]
    fn planted_linear_part_is_recovered() {
        // H = 3 x_1 - 2
        let inst =
            build_shell_delta_instance(dim(2), 0.5, 1.0, &[-2.0, 3.0], SphereRule::circle(512)).unwrap();
        let planted = HarmonicPoly::from_coeffs(dim(2), &[-2.0, 3.0]).unwrap();
        let bbox = GridBox::cube(&[0.0, 0.0], 1.0).unwrap();
        let rec = recover_common_h(&inst, &bbox, 1.0 / 16.0, Some(&planted)).unwrap();
        assert!(rec.planted_deviation.unwrap() <= 1e-10);
        assert!(rec.agreement <= 1e-10);
        assert!(rec.grid.flags().contains(&NodeFlag::Singular));
    }

    #[test]
    fn planted_saddle_is_stencil_harmonic() {
        let d = dim(2);
        let planted = HarmonicPoly::new(d, vec![(HarmonicTerm::DiffSquares(0, 1), 1.0)]).unwrap();
        let f = TestFunction::harmonic_only(planted.clone());
        let inst = UniquenessInstance::new(
            f.clone(),
            f,
            vec![0.0, 0.0],
            0.25,
            GridBox::cube(&[0.0, 0.0], 1.0).unwrap(),
        )
        .unwrap();
        let bbox = GridBox::cube(&[0.0, 0.0], 1.0).unwrap();
        let rec = recover_common_h(&inst, &bbox, 0.125, Some(&planted)).unwrap();
        assert_eq!(rec.harmonicity_defect, 0.0);
        assert_eq!(rec.planted_deviation, Some(0.0));
    }

    #[test]
    fn shell_without_harmonic_part_recovers_zero() {
        for d in [2, 3] {
            let rule = if d == 2 {
                SphereRule::circle(512)
            } else {
                SphereRule::product(16, 32)
            };
            let inst = build_shell_delta_instance(dim(d), 0.5, 1.0, &[], rule).unwrap();
            let bbox = GridBox::cube(&vec![0.0; d], 1.0).unwrap();
            let h = if d == 2 { 1.0 / 16.0 } else { 0.25 };
            let rec = recover_common_h(&inst, &bbox, h, None).unwrap();
            assert!(rec.grid.max_abs_valid() <= 1e-10, "d={d}");
            assert!(rec.harmonicity_defect <= 1e-9, "d={d}");
        }
    }

    #[test]
    fn line_constant_vanishes_at_both_ends() {
        for (r, mass) in [(1.0, 1.0), (0.3, 2.5)] {
            let inst =
                build_shell_delta_instance(dim(1), r, mass, &[0.5, -1.0], SphereRule::circle(2)).unwrap();
            let c = line_constants(&inst).unwrap();
            assert!(c.left.abs() <= 1e-12 && c.right.abs() <= 1e-12, "{c:?}");
            assert!(c.spread() <= 1e-12);
        }
    }

    #[test]
    fn rejects_atoms_outside_s() {
        let d = dim(2);
        let f = TestFunction::potential(DiscreteCharge::dirac(d, vec![0.9, 0.0], 1.0).unwrap());
        let g = TestFunction::potential(DiscreteCharge::empty(d));
        let w = GridBox::cube(&[0.0, 0.0], 2.0).unwrap();
        assert!(UniquenessInstance::new(f, g.clone(), vec![0.0, 0.0], 0.5, w.clone()).is_err());
        assert!(UniquenessInstance::new(g.clone(), g, vec![0.0, 0.0], 2.0, w).is_err());
    }

    #[test]
    fn report_json_has_expected_keys() {
        let inst = build_shell_delta_instance(dim(1), 1.0, 1.0, &[], SphereRule::circle(2)).unwrap();
        let rep = check_conclusions(&inst, 10, 0, 1e-12).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        for key in [
            "check",
            "mass_gap",
            "equality_defect",
            "potential_defect",
            "H_defect",
            "hypothesis_ok",
            "pass",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["check"], "uniqueness");
    }

    #[test]
    fn samples_do_not_depend_on_thread_count() {
        let inst = build_shell_delta_instance(dim(2), 0.5, 1.0, &[1.0], SphereRule::circle(64)).unwrap();
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| check_conclusions(&inst, 400, 4, 1e-8).unwrap().to_json())
        };
        assert_eq!(run(1), run(4));
    }
}
