//! Seeded Gaussian increments.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed. Parallel work
//! item `i` derives its seed with [`split_seed`], so sweeps are reproducible
//! regardless of scheduling.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::math;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// `seed ^ (0x9E3779B97F4A7C15 · (i + 1))`, wrapping.
#[inline]
pub fn split_seed(seed: u64, i: u64) -> u64 {
    seed ^ GOLDEN.wrapping_mul(i.wrapping_add(1))
}

/// Brownian increments over steps of length `dt`.
///
/// With `refinement = L`, each increment is the sum of `2^L` finer
/// increments of length `dt / 2^L`. A run at `dt` with `L = 1` therefore
/// sees the same Brownian path as a run at `dt / 2` with `L = 0`.
#[derive(Debug, Clone)]
pub struct Increments {
    rng: ChaCha8Rng,
    k: usize,
    sub: usize,
    fine_scale: f64,
    fine: Vec<f64>,
}

impl Increments {
    pub fn new(seed: u64, k: usize, dt: f64, refinement: u32) -> Self {
        let sub = 1usize << refinement;
        Increments {
            rng: ChaCha8Rng::seed_from_u64(seed),
            k,
            sub,
            fine_scale: math::sqrt(dt / sub as f64),
            fine: alloc::vec![0.0; k],
        }
    }

    /// Drivers per increment.
    pub fn dim(&self) -> usize {
        self.k
    }

    /// Fills `dw` (length k) with the next increment.
    pub fn next_into(&mut self, dw: &mut [f64]) {
        debug_assert_eq!(dw.len(), self.k);
        dw.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.sub {
            for f in self.fine.iter_mut() {
                *f = self.rng.sample::<f64, _>(StandardNormal);
            }
            for (d, f) in dw.iter_mut().zip(&self.fine) {
                *d += f * self.fine_scale;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_seed_is_distinct_and_stable() {
        let a: Vec<u64> = (0..100).map(|i| split_seed(7, i)).collect();
        for i in 0..a.len() {
            for j in 0..i {
                assert_ne!(a[i], a[j]);
            }
        }
        assert_eq!(split_seed(0, 0), GOLDEN);
    }

    #[test]
    fn refined_increments_match_finer_stream() {
        let dt = 0.01;
        let mut coarse = Increments::new(3, 2, dt, 1);
        let mut fine = Increments::new(3, 2, dt / 2.0, 0);
        let (mut c, mut f1, mut f2) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        for _ in 0..100 {
            coarse.next_into(&mut c);
            fine.next_into(&mut f1);
            fine.next_into(&mut f2);
            for i in 0..2 {
                assert!((c[i] - (f1[i] + f2[i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn increment_variance_is_dt() {
        let dt = 0.5;
        let mut inc = Increments::new(11, 1, dt, 0);
        let mut w = [0.0];
        let n = 200_000;
        let mut ss = 0.0;
        for _ in 0..n {
            inc.next_into(&mut w);
            ss += w[0] * w[0];
        }
        let var = ss / n as f64;
        // sd of the sample variance is dt·√(2/n) ≈ 0.0016
        assert!((var - dt).abs() < 0.01, "{var}");
    }
}
