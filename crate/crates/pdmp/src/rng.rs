use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Deterministic random stream keyed by `(seed, stream id)`.
///
/// The same pair always reproduces the same draw sequence, independent of
/// platform. Concurrent simulations each own a distinct stream id; the
/// harness is responsible for assigning disjoint ids.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh stream with the same seed and the given id.
    pub fn with_stream(&self, stream: u64) -> Self {
        RngStream::new(self.seed, stream)
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open01<F: Scalar>(&mut self) -> F {
        F::draw_open01(&mut self.rng)
    }

    pub fn std_normal<F: Scalar>(&mut self) -> F {
        F::draw_std_normal(&mut self.rng)
    }

    pub fn exp1<F: Scalar>(&mut self) -> F {
        F::draw_exp1(&mut self.rng)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}
