//! Seeded, portable randomness.
//!
//! The generator is ChaCha8: its bitstream is specified by the cipher, so the
//! same seed produces the same draws on every platform and in every run. The
//! uniform and Gaussian derivations on top are written out here (open
//! interval mapping and Box-Muller) instead of delegating to a distribution
//! crate, so the exact sample sequence is pinned by this file alone.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// A deterministic random source owned by exactly one caller.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    /// Box-Muller produces values in pairs; the second one waits here.
    spare_gaussian: Option<f64>,
}

/// SplitMix64 finalizer; used to spread seed bits and derive child seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_gaussian: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh generator on an independent stream.
    ///
    /// Children are keyed by `(seed, stream)`, so e.g. run `r` of a sweep can
    /// use `base.derive(r)` without overlapping the parent's draws.
    pub fn derive(&self, stream: u64) -> SeededRng {
        SeededRng::new(mix64(self.seed ^ mix64(stream.wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `[0, 1)` with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `[0, n)`, unbiased via rejection sampling.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index bound must be positive");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal draw via Box-Muller.
    pub fn standard_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn gaussian(&mut self, mean: f64, stddev: f64) -> f64 {
        mean + stddev * self.standard_gaussian()
    }

    /// Matrix of N(mean, stddev^2) draws, filled row-major.
    pub fn gaussian_matrix(
        &mut self,
        rows: usize,
        cols: usize,
        mean: f64,
        stddev: f64,
    ) -> Result<Matrix> {
        if stddev < 0.0 {
            return Err(Error::Parameter(format!(
                "gaussian stddev must be nonnegative, got {stddev}"
            )));
        }
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| self.gaussian(mean, stddev))
            .collect();
        Matrix::new(rows, cols, data)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.index(i + 1);
            slice.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_identical_sequences() {
        let mut a = SeededRng::new(123);
        let mut b = SeededRng::new(123);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let ma = SeededRng::new(9).gaussian_matrix(4, 5, 0.0, 1.0).unwrap();
        let mb = SeededRng::new(9).gaussian_matrix(4, 5, 0.0, 1.0).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn derived_streams_do_not_collide() {
        let base = SeededRng::new(1);
        let mut a = base.derive(0);
        let mut b = base.derive(1);
        let left: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let right: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(left, right);
        // Re-deriving the same stream reproduces it.
        let mut a2 = base.derive(0);
        let again: Vec<u64> = (0..8).map(|_| a2.next_u64()).collect();
        assert_eq!(left, again);
    }

    #[test]
    fn zero_stddev_collapses_to_the_mean() {
        let mut rng = SeededRng::new(5);
        let m = rng.gaussian_matrix(3, 3, 2.5, 0.0).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn negative_stddev_is_rejected() {
        let mut rng = SeededRng::new(5);
        assert!(rng.gaussian_matrix(2, 2, 0.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_moments_match_the_law_of_large_numbers() {
        let mut rng = SeededRng::new(42);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.gaussian(0.0, 1.0)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "sample mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "sample stddev {}", var.sqrt());
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut rng = SeededRng::new(11);
        for _ in 0..1000 {
            let x = rng.uniform(-3.0, 7.0);
            assert!((-3.0..7.0).contains(&x));
        }
    }

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let mut a: Vec<u32> = (0..50).collect();
        let mut b = a.clone();
        SeededRng::new(77).shuffle(&mut a);
        SeededRng::new(77).shuffle(&mut b);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<u32>>());
        // A different seed should move something (overwhelmingly likely).
        let mut c: Vec<u32> = (0..50).collect();
        SeededRng::new(78).shuffle(&mut c);
        assert_ne!(a, c);
    }
}
