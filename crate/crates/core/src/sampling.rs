//! Seeded random draws of functions, measures and subsets.
//!
//! Every stochastic routine in the crate takes an explicit `Rng`; seeds for
//! independent cases are derived with [`derive_seed`] so runs are reproducible
//! no matter in which order cases execute.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::space::{Func, Measure, SpaceRef};

pub type CaseRng = ChaCha8Rng;

/// Child seed for a named sub-stream of `seed`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

pub fn rng_for(seed: u64, label: &str) -> CaseRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

pub fn random_func(space: &SpaceRef, rng: &mut impl Rng, lo: f64, hi: f64) -> Func {
    let v = (0..space.size())
        .map(|_| rng.random_range(lo..hi))
        .collect();
    Func::new(space, v).expect("finite draw")
}

/// Independent weights uniform on `[0, max_weight)`.
pub fn random_measure(space: &SpaceRef, rng: &mut impl Rng, max_weight: f64) -> Measure {
    let w = (0..space.size())
        .map(|_| rng.random_range(0.0..max_weight))
        .collect();
    Measure::new(space, w).expect("nonnegative draw")
}

/// Uniform draw from the probability simplex (normalized exponentials).
pub fn random_probability(space: &SpaceRef, rng: &mut impl Rng) -> Measure {
    let w: Vec<f64> = (0..space.size())
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    Measure::new(space, w)
        .and_then(|m| m.normalized())
        .expect("positive draw")
}

/// A random subset, each point included with probability one half.
pub fn random_subset(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).filter(|_| rng.random::<bool>()).collect()
}
