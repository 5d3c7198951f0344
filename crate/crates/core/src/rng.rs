//! Portable seeded noise.
//!
//! The stream is ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)` and switched to stream `stream`. Uniforms take the
//! top 53 bits of each `u64`; normals use the cosine branch of Box-Muller on
//! two consecutive uniforms. All three steps are fully specified, so another
//! implementation can reproduce the same tensors.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub struct NoiseSource {
    rng: ChaCha20Rng,
}

impl NoiseSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            // Still advance so that streams line up regardless of sigma.
            let _ = self.standard_normal();
            0.0
        } else {
            sigma * self.standard_normal()
        }
    }

    pub fn normals(&mut self, n: usize, sigma: f64) -> Vec<f64> {
        (0..n).map(|_| self.normal(sigma)).collect()
    }
}
