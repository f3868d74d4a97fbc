//! Finite ground spaces, functions on them, and nonnegative measures.
//!
//! Points are addressed by 0-based index `0..n`. Where a recipe is written in
//! terms of the natural numbers `m = 1, 2, ...` (truncations of ℕ), point `i`
//! carries the label `m = i + 1`.

use serde::Serialize;
use std::sync::Arc;

use crate::error::{usage, Error, Result};

/// A finite ground set `{0..n}` with an increasing family of prefix sets
/// `K_j = {0..m_j}` standing in for an exhausting sequence of compacts.
///
/// Every subset is measurable and every subset is closed; the prefixes are
/// the only "compact" sets the checks in [`crate::limits`] look at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Space {
    size: usize,
    compact_family: Vec<usize>,
    ladder_tag: Option<usize>,
}

pub type SpaceRef = Arc<Space>;

impl Space {
    /// Space of `size` points carrying all prefixes `{0..m}`, `m = 1..=size`.
    pub fn new(size: usize) -> Result<SpaceRef> {
        Self::with_compact_family(size, (1..=size).collect())
    }

    /// Space with an explicit prefix family given by prefix lengths, which must be
    /// strictly increasing and lie in `1..=size`.
    pub fn with_compact_family(size: usize, family: Vec<usize>) -> Result<SpaceRef> {
        if size == 0 {
            return Err(usage("a space needs at least one point"));
        }
        if family.iter().any(|&m| m == 0 || m > size) {
            return Err(usage(format!("prefix lengths must lie in 1..={size}")));
        }
        if family.windows(2).any(|w| w[0] >= w[1]) {
            return Err(usage("compact family must be strictly increasing"));
        }
        Ok(Arc::new(Space {
            size,
            compact_family: family,
            ladder_tag: None,
        }))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Prefix lengths `m_1 < m_2 < ...` of the compact family.
    pub fn compact_family(&self) -> &[usize] {
        &self.compact_family
    }

    /// Position of this space in a truncation ladder, if it is one rung of one.
    pub fn ladder_tag(&self) -> Option<usize> {
        self.ladder_tag
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.size {
            Err(usage(format!(
                "index {i} out of range for a space of {} points",
                self.size
            )))
        } else {
            Ok(())
        }
    }
}

/// Geometric schedule `2, 4, ..., 2^max_exp`.
pub fn geometric_schedule(max_exp: u32) -> Vec<usize> {
    (1..=max_exp).map(|j| 1usize << j).collect()
}

/// One space per entry of a strictly increasing size schedule, each tagged
/// with its rung number and carrying all prefixes as its compact family.
pub fn make_truncation_ladder(schedule: &[usize]) -> Result<Vec<SpaceRef>> {
    if schedule.is_empty() {
        return Err(usage("empty ladder schedule"));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("ladder schedule must be strictly increasing"));
    }
    schedule
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let space = Space::new(n)?;
            let mut space = Arc::try_unwrap(space).expect("fresh Arc");
            space.ladder_tag = Some(k);
            Ok(Arc::new(space))
        })
        .collect()
}

fn same_space(a: &SpaceRef, b: &SpaceRef) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::SpaceMismatch {
            left: a.size,
            right: b.size,
        })
    }
}

/// A real-valued function on a [`Space`], stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct Func {
    space: SpaceRef,
    values: Vec<f64>,
}

impl Func {
    pub fn new(space: &SpaceRef, values: Vec<f64>) -> Result<Func> {
        if values.len() != space.size {
            return Err(usage(format!(
                "function has {} values but the space has {} points",
                values.len(),
                space.size
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(usage("function values must be finite"));
        }
        Ok(Func {
            space: space.clone(),
            values,
        })
    }

    pub fn constant(space: &SpaceRef, c: f64) -> Func {
        Func::new(space, vec![c; space.size]).expect("constant must be finite")
    }

    pub fn zero(space: &SpaceRef) -> Func {
        Func::constant(space, 0.0)
    }

    /// Unit vector at point `i`.
    pub fn unit(space: &SpaceRef, i: usize) -> Result<Func> {
        space.check_index(i)?;
        let mut v = vec![0.0; space.size];
        v[i] = 1.0;
        Func::new(space, v)
    }

    /// `scale` on the complement of the prefix `{0..m}`, zero on the prefix.
    pub fn off_prefix(space: &SpaceRef, m: usize, scale: f64) -> Func {
        let v = (0..space.size)
            .map(|i| if i < m { 0.0 } else { scale })
            .collect();
        Func::new(space, v).expect("finite")
    }

    /// Evaluates a recipe on the natural-number labels `m = i + 1`.
    pub fn from_profile(space: &SpaceRef, profile: impl Fn(usize) -> f64) -> Result<Func> {
        Func::new(space, (1..=space.size).map(profile).collect())
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Lowest index at which the maximum is attained.
    pub fn argmax(&self) -> usize {
        let m = self.max();
        self.values.iter().position(|&v| v == m).expect("nonempty")
    }

    fn zip_with(&self, other: &Func, op: impl Fn(f64, f64) -> f64) -> Result<Func> {
        same_space(&self.space, &other.space)?;
        let v = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Func::new(&self.space, v)
    }

    fn map(&self, op: impl Fn(f64) -> f64) -> Func {
        Func::new(&self.space, self.values.iter().map(|&a| op(a)).collect())
            .expect("pointwise map of finite values overflowed")
    }

    /// Pointwise minimum `f ∧ g`.
    pub fn lattice_min(&self, other: &Func) -> Result<Func> {
        self.zip_with(other, f64::min)
    }

    /// `f ∧ 1`.
    pub fn lattice_min_one(&self) -> Func {
        self.map(|a| a.min(1.0))
    }

    pub fn add(&self, other: &Func) -> Result<Func> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Func) -> Result<Func> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: f64, other: &Func) -> Result<Func> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn scale(&self, c: f64) -> Func {
        self.map(|a| c * a)
    }

    /// `f + c · 1`.
    pub fn shift(&self, c: f64) -> Func {
        self.map(|a| a + c)
    }

    /// Pointwise `f ≤ g`, compared exactly.
    pub fn le(&self, other: &Func) -> Result<bool> {
        same_space(&self.space, &other.space)?;
        Ok(self.values.iter().zip(&other.values).all(|(a, b)| a <= b))
    }

    pub fn sup_dist(&self, other: &Func) -> Result<f64> {
        same_space(&self.space, &other.space)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn pair(&self, mu: &Measure) -> Result<f64> {
        pairing(self, mu)
    }
}

/// A nonnegative finite measure on a [`Space`], one weight per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    space: SpaceRef,
    weights: Vec<f64>,
}

impl Measure {
    pub fn new(space: &SpaceRef, weights: Vec<f64>) -> Result<Measure> {
        if weights.len() != space.size {
            return Err(usage(format!(
                "measure has {} weights but the space has {} points",
                weights.len(),
                space.size
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(usage("measure weights must be finite and nonnegative"));
        }
        Ok(Measure {
            space: space.clone(),
            weights,
        })
    }

    /// Clamps tiny negative round-off to zero before validating.
    pub(crate) fn from_rounded(space: &SpaceRef, mut weights: Vec<f64>) -> Result<Measure> {
        for w in &mut weights {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        Measure::new(space, weights)
    }

    pub fn zero(space: &SpaceRef) -> Measure {
        Measure::new(space, vec![0.0; space.size]).expect("valid")
    }

    /// Unit point mass at `i`.
    pub fn dirac(space: &SpaceRef, i: usize) -> Result<Measure> {
        space.check_index(i)?;
        let mut w = vec![0.0; space.size];
        w[i] = 1.0;
        Measure::new(space, w)
    }

    pub fn uniform(space: &SpaceRef) -> Measure {
        let n = space.size as f64;
        Measure::new(space, vec![1.0 / n; space.size]).expect("valid")
    }

    /// Probability measure with weights proportional to `ratio^m`, `m = 1..=n`.
    pub fn geometric(space: &SpaceRef, ratio: f64) -> Result<Measure> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(usage("geometric ratio must lie in (0, 1)"));
        }
        let raw: Vec<f64> = (1..=space.size).map(|m| ratio.powi(m as i32)).collect();
        Measure::new(space, raw)?.normalized()
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `μ({0..m})`.
    pub fn prefix_mass(&self, m: usize) -> f64 {
        self.weights[..m.min(self.weights.len())].iter().sum()
    }

    pub fn mass_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.weights[i]).sum()
    }

    pub fn scale(&self, c: f64) -> Result<Measure> {
        Measure::new(&self.space, self.weights.iter().map(|w| c * w).collect())
    }

    /// Rescaled to total mass one.
    pub fn normalized(&self) -> Result<Measure> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(usage("cannot normalize the zero measure"));
        }
        self.scale(1.0 / mass)
    }

    /// `λ μ + (1 - λ) ν`.
    pub fn mix(&self, lambda: f64, other: &Measure) -> Result<Measure> {
        same_space(&self.space, &other.space)?;
        Measure::new(
            &self.space,
            self.weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        )
    }

    pub fn sup_dist(&self, other: &Measure) -> Result<f64> {
        same_space(&self.space, &other.space)?;
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

// Functions and measures serialize as their value vectors.
impl Serialize for Func {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values().serialize(s)
    }
}

impl Serialize for Measure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.weights().serialize(s)
    }
}

/// `⟨f, μ⟩ = Σ f_i μ_i`.
pub fn pairing(f: &Func, mu: &Measure) -> Result<f64> {
    same_space(&f.space, &mu.space)?;
    Ok(f.values.iter().zip(&mu.weights).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize) -> SpaceRef {
        Space::new(n).unwrap()
    }

    #[test]
    fn pairing_examples() {
        let s = space(3);
        let f = Func::new(&s, vec![1.0, 2.0, 3.0]).unwrap();
        let mu = Measure::new(&s, vec![1.0; 3]).unwrap();
        assert_eq!(pairing(&f, &mu).unwrap(), 6.0);

        let ind = Func::unit(&s, 0).unwrap();
        assert_eq!(pairing(&ind, &Measure::dirac(&s, 0).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn pairing_matches_loop_sum() {
        let s = space(50);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = Func::new(&s, (0..50).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let mu = Measure::new(&s, (0..50).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap();
        let mut expected = 0.0;
        for i in 0..50 {
            expected += f.values()[i] * mu.weights()[i];
        }
        assert!((pairing(&f, &mu).unwrap() - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn pairing_space_mismatch() {
        let f = Func::zero(&space(3));
        let mu = Measure::zero(&space(4));
        assert_eq!(
            pairing(&f, &mu),
            Err(Error::SpaceMismatch { left: 3, right: 4 })
        );
    }

    #[test]
    fn lattice_examples() {
        let s = space(2);
        let f = Func::new(&s, vec![0.0, 2.0]).unwrap();
        let g = Func::new(&s, vec![1.0, 1.0]).unwrap();
        assert_eq!(f.lattice_min(&g).unwrap().values(), &[0.0, 1.0]);
        let h = Func::new(&s, vec![0.5, 3.0]).unwrap();
        assert_eq!(h.lattice_min_one().values(), &[0.5, 1.0]);
        assert!(f.lattice_min(&Func::zero(&space(3))).is_err());
    }

    #[test]
    fn dirac_examples() {
        let s = space(3);
        let d = Measure::dirac(&s, 1).unwrap();
        assert_eq!(d.weights(), &[0.0, 1.0, 0.0]);
        assert_eq!(d.total_mass(), 1.0);
        assert!(matches!(Measure::dirac(&s, 3), Err(Error::Usage(_))));
        let f = Func::new(&s, vec![4.0, -2.0, 9.0]).unwrap();
        for i in 0..3 {
            let d = Measure::dirac(&s, i).unwrap();
            assert_eq!(pairing(&f, &d).unwrap(), f.values()[i]);
            assert_eq!(d.total_mass(), 1.0);
        }
    }

    #[test]
    fn measure_rejects_negative_weights() {
        assert!(Measure::new(&space(2), vec![0.5, -0.1]).is_err());
    }

    #[test]
    fn ladder_construction() {
        let ladder = make_truncation_ladder(&[2, 4, 8]).unwrap();
        assert_eq!(
            ladder.iter().map(|s| s.size()).collect::<Vec<_>>(),
            vec![2, 4, 8]
        );
        for (k, rung) in ladder.iter().enumerate() {
            assert_eq!(rung.ladder_tag(), Some(k));
            let fam = rung.compact_family();
            assert_eq!(fam, (1..=rung.size()).collect::<Vec<_>>().as_slice());
            assert!(fam.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(make_truncation_ladder(&[4, 4]).is_err());
        assert!(make_truncation_ladder(&[8, 2]).is_err());
        assert_eq!(geometric_schedule(3), vec![2, 4, 8]);
    }

    #[test]
    fn profile_restriction_consistent() {
        let ladder = make_truncation_ladder(&geometric_schedule(6)).unwrap();
        let profile = |m: usize| 1.0 - 1.0 / m as f64;
        let top = Func::from_profile(ladder.last().unwrap(), profile).unwrap();
        for rung in &ladder {
            let f = Func::from_profile(rung, profile).unwrap();
            assert_eq!(f.values(), &top.values()[..rung.size()]);
        }
    }

    fn triple(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        let v = || proptest::collection::vec(-100.0f64..100.0, n);
        (v(), v(), v())
    }

    proptest! {
        #[test]
        fn pairing_bilinear((a, b, w) in triple(6), c in -3.0f64..3.0) {
            let s = space(6);
            let f = Func::new(&s, a).unwrap();
            let g = Func::new(&s, b).unwrap();
            let mu = Measure::new(&s, w.iter().map(|x| x.abs()).collect()).unwrap();
            let nu = Measure::new(&s, w.iter().map(|x| (x * 0.5).abs() + 1.0).collect()).unwrap();
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);

            let lhs = pairing(&f.add(&g).unwrap(), &mu).unwrap();
            prop_assert!(rel(lhs, pairing(&f, &mu).unwrap() + pairing(&g, &mu).unwrap()));
            prop_assert!(rel(pairing(&f.scale(c), &mu).unwrap(), c * pairing(&f, &mu).unwrap()));

            let sum = Measure::new(&s, mu.weights().iter().zip(nu.weights()).map(|(a, b)| a + b).collect()).unwrap();
            prop_assert!(rel(pairing(&f, &sum).unwrap(), pairing(&f, &mu).unwrap() + pairing(&f, &nu).unwrap()));
            let k = c.abs();
            prop_assert!(rel(pairing(&f, &mu.scale(k).unwrap()).unwrap(), k * pairing(&f, &mu).unwrap()));
        }

        #[test]
        fn lattice_laws((a, b, c) in triple(5)) {
            let s = space(5);
            let f = Func::new(&s, a).unwrap();
            let g = Func::new(&s, b).unwrap();
            let h = Func::new(&s, c).unwrap();
            prop_assert_eq!(f.lattice_min(&f).unwrap(), f.clone());
            prop_assert_eq!(f.lattice_min(&g).unwrap(), g.lattice_min(&f).unwrap());
            prop_assert_eq!(
                f.lattice_min(&g).unwrap().lattice_min(&h).unwrap(),
                f.lattice_min(&g.lattice_min(&h).unwrap()).unwrap()
            );
            prop_assert!(f.lattice_min_one().values().iter().all(|&v| v <= 1.0));
        }

        #[test]
        fn measure_constructors_nonnegative(w in proptest::collection::vec(0.0f64..10.0, 1..20), lam in 0.0f64..1.0) {
            let s = space(w.len());
            let mu = Measure::new(&s, w).unwrap();
            let u = Measure::uniform(&s);
            prop_assert!(mu.mix(lam, &u).unwrap().weights().iter().all(|&x| x >= 0.0));
            if mu.total_mass() > 0.0 {
                prop_assert!(mu.normalized().unwrap().weights().iter().all(|&x| x >= 0.0));
            }
        }
    }
}
