use rand::seq::index;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded random source.
///
/// Backed by ChaCha8 seeded through `seed_from_u64`, which produces the
/// same stream on every platform. There is no global generator; every
/// sampling call takes one of these explicitly.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.gen_range(lo..=hi)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform random `amount`-subset of `0..length`, sorted ascending.
    pub fn subset(&mut self, length: usize, amount: usize) -> Vec<usize> {
        let mut picked = index::sample(&mut self.inner, length, amount).into_vec();
        picked.sort_unstable();
        picked
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }
}
