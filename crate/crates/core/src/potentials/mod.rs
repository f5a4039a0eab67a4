//! Potentials `pt_mu(y) = sum_i w_i K_{d-2}(x_i, y)` of discrete charges:
//! direct and batched evaluation, the Barnes-Hut treecode, domain status, the
//! closed form on the line outside the support hull, and the far-field
//! asymptotics `pt_mu(x) = mu(R^d) k_{d-2}(|x|) + O(|x|^{1-d})`.

mod treecode;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charges::DiscreteCharge;
use crate::error::{domain, Result};
use crate::kernels::{distance, norm, radial, ExtendedReal};

pub use treecode::{potential_treecode, Tree, CANCELLATION_RATIO};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum PotentialValue {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
}

impl PotentialValue {
    pub fn status(&self) -> &'static str {
        match self {
            PotentialValue::Finite(_) => "finite",
            PotentialValue::PlusInfinity => "plus-infinity",
            PotentialValue::MinusInfinity => "minus-infinity",
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            PotentialValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, PotentialValue::Finite(_))
    }

    pub fn to_extended(self) -> ExtendedReal {
        match self {
            PotentialValue::Finite(v) => ExtendedReal::new(v).expect("potentials are never NaN"),
            PotentialValue::PlusInfinity => ExtendedReal::PLUS_INFINITY,
            PotentialValue::MinusInfinity => ExtendedReal::MINUS_INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainStatus {
    InDomain,
    NotInDomain,
}

/// Direct summation in atom-list order.
///
/// For `d >= 2` a target on an atom gets `-inf` when the atom weight is
/// positive and `+inf` when negative; the other atoms do not matter.
pub fn potential_direct(c: &DiscreteCharge, y: &[f64]) -> PotentialValue {
    let d = c.dim();
    assert_eq!(y.len(), d.get(), "target dimension does not match charge");
    let mut sum = 0.0;
    let mut pole = None;
    for a in c.atoms() {
        let t = distance(&a.location, y);
        if t == 0.0 {
            // K = 0 on the diagonal in d = 1
            if d.get() >= 2 {
                pole = Some(a.weight);
            }
            continue;
        }
        sum += a.weight * radial(d, t);
    }
    match pole {
        Some(w) if w > 0.0 => PotentialValue::MinusInfinity,
        Some(_) => PotentialValue::PlusInfinity,
        None => PotentialValue::Finite(sum),
    }
}

/// Atomic specialization of the domain test: only atom locations fail, and
/// only in `d >= 2`.
pub fn potential_domain_status(c: &DiscreteCharge, y: &[f64]) -> DomainStatus {
    if c.dim().get() == 1 {
        return DomainStatus::InDomain;
    }
    if c.atoms().iter().any(|a| distance(&a.location, y) == 0.0) {
        DomainStatus::NotInDomain
    } else {
        DomainStatus::InDomain
    }
}

/// `potential_direct` over many targets, parallel over targets. Each target's
/// sum is sequential, so results do not depend on the thread count.
pub fn potential_batch(c: &DiscreteCharge, targets: &[Vec<f64>]) -> Vec<PotentialValue> {
    targets.par_iter().map(|y| potential_direct(c, y)).collect()
}

/// Closed form of a positive charge on the line, valid outside
/// `[inf supp, sup supp]`:
/// `M x - int y dmu` to the right and `-M x + int y dmu` to the left.
pub fn potential_line_closed_form(c: &DiscreteCharge, x: f64) -> Result<f64> {
    if c.dim().get() != 1 {
        return domain("line closed form needs d = 1");
    }
    if !c.is_positive() {
        return domain("line closed form needs a positive charge");
    }
    let s_l = c
        .atoms()
        .iter()
        .map(|a| a.location[0])
        .fold(f64::INFINITY, f64::min);
    let s_r = c
        .atoms()
        .iter()
        .map(|a| a.location[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let mass = c.total_mass();
    let moment = c.first_moment()[0];
    if x >= s_r {
        Ok(mass * x - moment)
    } else if x <= s_l {
        Ok(-mass * x + moment)
    } else {
        domain(format!(
            "closed form inapplicable: {x} lies strictly inside the support hull ({s_l}, {s_r})"
        ))
    }
}

/// `mu(R^d) k_{d-2}(|x|)`.
pub fn asymptotic_leading(c: &DiscreteCharge, x: &[f64]) -> Result<f64> {
    c.dim().check_point(x)?;
    let r = norm(x);
    if r == 0.0 {
        return domain("asymptotic term is undefined at the origin");
    }
    Ok(c.total_mass() * radial(c.dim(), r))
}

/// Far-field remainder samples and their log-log decay rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub total_mass: f64,
    pub radii: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `ln error` against `ln radius`, over the
    /// nonzero errors. `-inf` when every error is zero.
    pub slope: f64,
    /// Set when the leading term reproduces the potential exactly at every
    /// sample.
    pub exact: bool,
}

/// Samples `max_dir |pt(r u) - M k_{d-2}(r)|` on each radius and fits the
/// decay exponent.
pub fn tail_decay_exponent(c: &DiscreteCharge, radii: &[f64], directions: &[Vec<f64>]) -> Result<TailFit> {
    let d = c.dim();
    if radii.len() < 4 {
        return domain("tail fit needs at least four radii");
    }
    if radii.windows(2).any(|w| !(w[0] < w[1])) {
        return domain("tail fit radii must be strictly increasing");
    }
    let origin = vec![0.0; d.get()];
    let limit = 2.0 * c.support_radius(&origin);
    if let Some(r) = radii.iter().find(|&&r| !(r > limit)) {
        return domain(format!(
            "radius {r} is not beyond twice the support radius ({limit})"
        ));
    }
    if directions.is_empty() {
        return domain("tail fit needs at least one direction");
    }
    let mut units = Vec::with_capacity(directions.len());
    for dir in directions {
        d.check_point(dir)?;
        let n = norm(dir);
        if !(n > 0.0) || !n.is_finite() {
            return domain("directions must be nonzero and finite");
        }
        units.push(dir.iter().map(|v| v / n).collect::<Vec<f64>>());
    }

    let mut errors = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst = 0.0f64;
        for u in &units {
            let x: Vec<f64> = u.iter().map(|v| r * v).collect();
            let pt = potential_direct(c, &x)
                .finite()
                .expect("targets beyond the support are off the atoms");
            let lead = asymptotic_leading(c, &x)?;
            worst = worst.max((pt - lead).abs());
        }
        errors.push(worst);
    }

    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(&errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(r, e)| (r.ln(), e.ln()))
        .collect();
    let (slope, exact) = if pts.is_empty() {
        (f64::NEG_INFINITY, true)
    } else if pts.len() == 1 {
        return domain("only one nonzero remainder sample; slope is undetermined");
    } else {
        (least_squares_slope(&pts), false)
    };
    Ok(TailFit {
        total_mass: c.total_mass(),
        radii: radii.to_vec(),
        errors,
        slope,
        exact,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charges::{uniform_sphere_measure, PointCharge, SphereRule};
    use crate::kernels::Dimension;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dim(d: usize) -> Dimension {
        Dimension::new(d).unwrap()
    }

    fn charge(d: usize, atoms: &[(&[f64], f64)]) -> DiscreteCharge {
        DiscreteCharge::new(
            dim(d),
            atoms
                .iter()
                .map(|(x, w)| PointCharge::new(x.to_vec(), *w))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn direct_examples() {
        let d3 = charge(3, &[(&[0.0, 0.0, 0.0], 1.0)]);
        assert_eq!(
            potential_direct(&d3, &[2.0, 0.0, 0.0]),
            PotentialValue::Finite(-0.5)
        );
        let d2 = charge(2, &[(&[0.0, 0.0], 1.0)]);
        assert_eq!(potential_direct(&d2, &[0.0, 0.0]), PotentialValue::MinusInfinity);
        let neg = charge(2, &[(&[0.0, 0.0], -1.0), (&[1.0, 0.0], 5.0)]);
        assert_eq!(potential_direct(&neg, &[0.0, 0.0]), PotentialValue::PlusInfinity);
        let d1 = charge(1, &[(&[0.0], 1.0), (&[2.0], 1.0)]);
        assert_eq!(potential_direct(&d1, &[0.0]), PotentialValue::Finite(2.0));
    }

    #[test]
    fn unit_sphere_shell_value() {
        let shell = uniform_sphere_measure(dim(3), &[0.0; 3], 1.0, 1.0, SphereRule::product(32, 64)).unwrap();
        let v = potential_direct(&shell, &[2.0, 0.0, 0.0]).finite().unwrap();
        assert!((v + 0.5).abs() <= 1e-10);
    }

    #[test]
    fn domain_status_examples() {
        let d2 = charge(2, &[(&[0.0, 0.0], 1.0)]);
        assert_eq!(
            potential_domain_status(&d2, &[0.0, 0.0]),
            DomainStatus::NotInDomain
        );
        assert_eq!(potential_domain_status(&d2, &[1.0, 0.0]), DomainStatus::InDomain);
        let d1 = charge(1, &[(&[0.0], 1.0), (&[0.5], -3.0)]);
        for y in [0.0, 0.5, 1.0] {
            assert_eq!(potential_domain_status(&d1, &[y]), DomainStatus::InDomain);
        }
    }

    #[test]
    fn batch_examples() {
        let d2 = charge(2, &[(&[0.0, 0.0], 1.0)]);
        assert!(potential_batch(&d2, &[]).is_empty());
        let e = std::f64::consts::E;
        let out = potential_batch(&d2, &[vec![e, 0.0], vec![e * e, 0.0]]);
        assert!((out[0].finite().unwrap() - 1.0).abs() < 1e-15);
        assert!((out[1].finite().unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn batch_is_bitwise_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let atoms = (0..200)
            .map(|_| {
                PointCharge::new(
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let c = DiscreteCharge::new(dim(2), atoms).unwrap();
        let targets: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
            .collect();
        let batch = potential_batch(&c, &targets);
        for (t, b) in targets.iter().zip(&batch) {
            let direct = potential_direct(&c, t);
            assert_eq!(b.finite().unwrap().to_bits(), direct.finite().unwrap().to_bits());
        }
    }

    #[test]
    fn line_closed_form_examples() {
        let delta = charge(1, &[(&[0.0], 1.0)]);
        assert_eq!(potential_line_closed_form(&delta, 5.0).unwrap(), 5.0);
        let two = charge(1, &[(&[-1.0], 1.0), (&[1.0], 2.0)]);
        assert_eq!(potential_line_closed_form(&two, 3.0).unwrap(), 8.0);
        assert_eq!(potential_line_closed_form(&two, -2.0).unwrap(), 7.0);
        assert!(potential_line_closed_form(&two, 0.0).is_err());
        let signed = charge(1, &[(&[-1.0], 1.0), (&[1.0], -2.0)]);
        assert!(potential_line_closed_form(&signed, 3.0).is_err());
        assert!(potential_line_closed_form(&charge(2, &[(&[0.0, 0.0], 1.0)]), 3.0).is_err());
    }

    #[test]
    fn asymptotic_examples() {
        let d2 = charge(2, &[(&[0.0, 0.0], 1.0)]);
        assert!((asymptotic_leading(&d2, &[10.0, 0.0]).unwrap() - 10f64.ln()).abs() < 1e-15);
        let d3 = charge(3, &[(&[0.1, 0.0, 0.0], 2.0), (&[0.0, 0.1, 0.0], 1.0)]);
        assert_eq!(asymptotic_leading(&d3, &[0.0, 2.0, 0.0]).unwrap(), -1.5);
        assert!(asymptotic_leading(&d3, &[0.0; 3]).is_err());

        let pair = charge(2, &[(&[1.0, 0.0], 1.0), (&[-1.0, 0.0], 1.0)]);
        let x = [10.0, 0.0];
        let diff = potential_direct(&pair, &x).finite().unwrap() - asymptotic_leading(&pair, &x).unwrap();
        // ln 9 + ln 11 - 2 ln 10
        assert!((diff - (99f64.ln() - 100f64.ln())).abs() < 1e-14);
        assert!((diff + 0.0100503358535014).abs() < 1e-12);
    }

    const RADII: [f64; 4] = [10.0, 1e2, 1e3, 1e4];

    #[test]
    fn tail_fit_centered_atom_is_exact() {
        for d in 1..=3 {
            let c = DiscreteCharge::dirac(dim(d), vec![0.0; d], 1.0).unwrap();
            let mut dirs = vec![vec![0.0; d]; 1];
            dirs[0][0] = 1.0;
            let mut other = vec![-0.6; d];
            other[0] = 0.8;
            dirs.push(other);
            let fit = tail_decay_exponent(&c, &RADII, &dirs).unwrap();
            assert!(fit.exact, "d={d}: {:?}", fit.errors);
            assert_eq!(fit.slope, f64::NEG_INFINITY);
        }
    }

    #[test]
    fn tail_fit_off_center_slopes() {
        let c2 = charge(2, &[(&[1.0, 0.0], 1.0)]);
        let fit = tail_decay_exponent(&c2, &RADII, &[vec![1.0, 0.0]]).unwrap();
        // error = ln r - ln(r-1) ~ 1/r
        for (r, e) in fit.radii.iter().zip(&fit.errors) {
            let oracle = (r / (r - 1.0)).ln();
            assert!((e - oracle).abs() <= 1e-10 * oracle);
        }
        assert!((fit.slope + 1.0).abs() <= 0.05, "{}", fit.slope);

        let c3 = charge(3, &[(&[1.0, 0.0, 0.0], 1.0)]);
        let fit3 = tail_decay_exponent(&c3, &RADII, &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(fit3.slope <= -2.0 + 0.1, "{}", fit3.slope);

        let c1 = charge(1, &[(&[1.0], 1.0)]);
        let fit1 = tail_decay_exponent(&c1, &RADII, &[vec![1.0], vec![-1.0]]).unwrap();
        assert!(fit1.slope <= 0.1);
    }

    #[test]
    fn tail_fit_preconditions() {
        let c = charge(2, &[(&[3.0, 0.0], 1.0)]);
        assert!(tail_decay_exponent(&c, &RADII, &[vec![1.0, 0.0]]).is_ok());
        assert!(tail_decay_exponent(&c, &[5.0, 10.0, 20.0, 40.0], &[vec![1.0, 0.0]]).is_err());
        assert!(tail_decay_exponent(&c, &[10.0, 20.0, 40.0], &[vec![1.0, 0.0]]).is_err());
        assert!(tail_decay_exponent(&c, &[10.0, 20.0, 20.0, 40.0], &[vec![1.0, 0.0]]).is_err());
        assert!(tail_decay_exponent(&c, &RADII, &[vec![0.0, 0.0]]).is_err());
    }

    fn fd_laplacian(c: &DiscreteCharge, y: &[f64], h: f64) -> f64 {
        let f = |p: &[f64]| potential_direct(c, p).finite().unwrap();
        let center = f(y);
        (0..y.len())
            .map(|i| {
                let mut a = y.to_vec();
                let mut b = y.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - 2.0 * center + f(&b)) / (h * h)
            })
            .sum()
    }

    #[test]
    fn potential_is_harmonic_off_support() {
        for d in 2..=3 {
            let mut atoms = vec![PointCharge::new(vec![0.0; d], 1.0)];
            let mut far = vec![0.3; d];
            far[0] = -0.4;
            atoms.push(PointCharge::new(far, -0.7));
            let c = DiscreteCharge::new(dim(d), atoms).unwrap();
            let mut y = vec![0.0; d];
            y[0] = 1.6;
            y[1] = 0.9;
            let e1 = fd_laplacian(&c, &y, 0.1).abs();
            let e2 = fd_laplacian(&c, &y, 0.05).abs();
            let order = (e1 / e2).log2();
            assert!((order - 2.0).abs() < 0.3, "d={d} order={order}");
        }
    }

    fn positive_line_charge() -> impl Strategy<Value = DiscreteCharge> {
        prop::collection::vec((-1.0f64..1.0, 1e-3f64..2.0), 1..50).prop_map(|atoms| {
            DiscreteCharge::new(
                dim(1),
                atoms
                    .into_iter()
                    .map(|(x, w)| PointCharge::new(vec![x], w))
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn line_closed_form_matches_direct(c in positive_line_charge(), r in 2.0f64..100.0, left in any::<bool>()) {
            let x = if left { -r } else { r };
            let closed = potential_line_closed_form(&c, x).unwrap();
            let direct = potential_direct(&c, &[x]).finite().unwrap();
            prop_assert!((closed - direct).abs() <= 1e-12 * direct.abs());
        }

        #[test]
        fn superposition(a in -3.0f64..3.0, b in -3.0f64..3.0,
                         xs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.1f64..2.0), 1..10),
                         ys in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -2.0f64..-0.1), 1..10),
                         t in (2.0f64..5.0, -5.0f64..5.0)) {
            let mk = |v: &Vec<(f64, f64, f64)>| DiscreteCharge::new(
                dim(2),
                v.iter().map(|(x, y, w)| PointCharge::new(vec![*x, *y], *w)).collect(),
            ).unwrap();
            let c1 = mk(&xs);
            let c2 = mk(&ys);
            let sum = c1.scaled(a).add(&c2.scaled(b)).unwrap();
            let y = [t.0, t.1];
            let p1 = potential_direct(&c1, &y).finite().unwrap();
            let p2 = potential_direct(&c2, &y).finite().unwrap();
            let lhs = potential_direct(&sum, &y).finite().unwrap();
            let rhs = a * p1 + b * p2;
            let scale = (a * p1).abs() + (b * p2).abs() + c1.total_variation_mass() + c2.total_variation_mass();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn tail_bound_holds(d in 1usize..4, atoms in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 0.1f64..2.0), 1..6)) {
            let c = DiscreteCharge::new(
                dim(d),
                atoms.into_iter().map(|(x, w)| PointCharge::new(x[..d].to_vec(), w)).collect(),
            ).unwrap();
            let mut dirs = vec![];
            for i in 0..d {
                let mut u = vec![0.0; d];
                u[i] = 1.0;
                dirs.push(u.clone());
                u[i] = -1.0;
                dirs.push(u);
            }
            let fit = tail_decay_exponent(&c, &RADII, &dirs).unwrap();
            prop_assert!(fit.exact || fit.slope <= -(d as f64 - 1.0) + 0.1, "slope {}", fit.slope);
        }
    }
}
