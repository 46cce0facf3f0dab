//! Reproducible random streams.
//!
//! All randomness flows through xoshiro256++ seeded with SplitMix64
//! (`rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64`). Uniforms take the top
//! 53 bits of each output; Gaussians use the Box–Muller transform on two
//! consecutive uniforms, consuming both outputs. Given a seed, every draw is
//! fixed across platforms.

use std::f64::consts::TAU;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct Stream {
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * INV_2_53
    }

    /// Uniform on (0, 1].
    fn uniform_open_low(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * INV_2_53
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}
