//! Portable random streams for synthetic data.
//!
//! All randomness comes from ChaCha8 keyed by the scene seed (expanded with
//! `SeedableRng::seed_from_u64`, which is PCG32-based and stable). Each
//! consumer gets its own ChaCha stream number, so adding draws in one stage
//! never shifts another stage's values. Floats and integers are derived from
//! raw `u64` words with the fixed recipes below rather than library
//! distributions, which keeps the streams reproducible in other languages.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream numbers. Per-frame or per-AOI streams add an index on top.
pub mod stream {
    pub const PLACEMENT: u64 = 1;
    pub const TIMING: u64 = 2;
    pub const RENDER: u64 = 3;
    pub const CLOUDS: u64 = 4;
    pub const PERTURB: u64 = 5;
    pub const FLICKER: u64 = 6;
}

/// Stream number for item `index` of a stage.
pub fn substream(kind: u64, index: usize) -> u64 {
    (kind << 32) | index as u64
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`: top 53 bits of one word.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)` by rejection (no modulo bias).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_in(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi);
        lo + self.below((hi - lo) as u64 + 1) as i64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box–Muller; the second value of each pair is
    /// returned by the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
