//! Seeded synthetic pattern sets used by tests, experiments and the demo.
//!
//! All generators draw from ChaCha8 so a `(parameters, seed)` pair yields
//! the same patterns on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bank::norm;

/// Noise level of the standard correlated fixture.
pub const CORRELATED_NOISE: f64 = 0.05;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` Gaussian vectors of length `dim` scaled to unit ℓ2 norm.
pub fn random_unit(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let len = norm(&v);
            v.iter_mut().for_each(|x| *x /= len);
            v
        })
        .collect()
}

/// `n` independent uniform patterns in `[0, 1]`.
pub fn separable(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Shared uniform base pattern plus per-item Gaussian noise of standard
/// deviation `sigma`, clamped to `[0, 1]`.
pub fn correlated(n: usize, dim: usize, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng(seed);
    let base: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (0..n)
        .map(|_| {
            base.iter()
                .map(|b| {
                    let e: f64 = rng.sample(StandardNormal);
                    (b + sigma * e).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect()
}

/// Two distinct indices below `n`, drawn from `seed`.
pub fn distinct_pair(n: usize, seed: u64) -> Option<(usize, usize)> {
    if n < 2 {
        return None;
    }
    let mut rng = rng(seed);
    let a = rng.random_range(0..n);
    let b = (a + rng.random_range(1..n)) % n;
    Some((a, b))
}
