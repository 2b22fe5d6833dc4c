//! Counter-based random streams.
//!
//! Every stream is ChaCha20 keyed by a 64-bit master seed (expanded with
//! `seed_from_u64`) and selected by a 64-bit stream id, usually a replicate or
//! trial index. Draws on one stream never depend on how many other streams were
//! consumed or on which thread consumed them.
//!
//! Uniforms take the top 53 bits of a `u64`. Standard normals use the Marsaglia
//! polar transform on uniforms in `(-1, 1)`, emitting both values of each pair.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const GENERATOR: &str = "chacha20(seed_from_u64(master_seed), stream=index)";
pub const NORMAL_TRANSFORM: &str = "marsaglia-polar";

pub fn stream(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform on `[0, 1)` with 53 bits of resolution.
pub fn uniform01<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform_in<R: RngCore>(rng: &mut R, low: f64, high: f64) -> f64 {
    low + (high - low) * uniform01(rng)
}

/// Integer uniform on `low..=high`.
pub fn uniform_usize<R: RngCore>(rng: &mut R, low: usize, high: usize) -> usize {
    let span = (high - low + 1) as f64;
    low + ((uniform01(rng) * span) as usize).min(high - low)
}

/// Standard normal generator over a single stream.
pub struct NormalStream<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * uniform01(&mut self.rng) - 1.0;
            let v = 2.0 * uniform01(&mut self.rng) - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.next();
        }
    }
}
