//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the 64-bit run seed and
//! addressed by a 64-bit stream id. ChaCha output is specified bit-for-bit,
//! so a given `(seed, stream)` pair yields the same values on every platform.
//! `split(k)` derives child `k` by hashing the parent path into a fresh
//! stream id, which keeps siblings independent and stable under reordering.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

// splitmix64 finalizer, used only to mix stream ids.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream `index`; does not advance `self`.
    pub fn split(&self, index: u64) -> SeededRng {
        Self::with_stream(self.seed, mix(self.stream ^ mix(index.wrapping_add(1))))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        self.inner.random_range(lo..=hi)
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn splits_are_distinct_and_reproducible() {
        let root = SeededRng::new(1);
        let mut c0 = root.split(0);
        let mut c1 = root.split(1);
        let mut c0b = root.split(0);
        let x0 = c0.next_u64();
        assert_ne!(x0, c1.next_u64());
        assert_eq!(x0, c0b.next_u64());
        let mut grand = root.split(0).split(0);
        assert_ne!(grand.next_u64(), x0);
    }

    #[test]
    fn frozen_first_draw() {
        // Pins the generator so silent algorithm changes are caught.
        let mut r = SeededRng::new(42);
        let first = r.next_u64();
        assert_eq!(first, 12_578_764_544_318_200_737);
        let mut again = SeededRng::new(42);
        assert_eq!(first, again.next_u64());
        assert_ne!(first, SeededRng::new(43).next_u64());
    }
}
