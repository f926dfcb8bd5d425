//! Seeded random streams. Every run derives independent ChaCha8 streams
//! from one seed so that, e.g., extra expert queries never shift the
//! observation noise sequence.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Environment construction and stochastic drift.
    Environment = 0,
    /// Noise on the bandit observation `y_t`.
    Observation = 1,
    /// Noise on expert answers.
    Expert = 2,
    /// Policy-internal randomness (DPP sampling).
    Policy = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// One `N(0, var)` draw. `var = 0` returns exactly zero.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * var.sqrt()
}
