//! Hockney-style point-to-point cost model driving virtual time.
//!
//! A message of `b` bytes costs `alpha * (1 + jitter) + beta * b` microseconds.
//! Local reductions cost `gamma` per reduced byte. All virtual time is kept in
//! integer nanoseconds; conversions round to the nearest nanosecond.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub alpha_us: f64,
    pub beta_us_per_byte: f64,
    pub gamma_us_per_byte: f64,
    pub jitter_fraction: f64,
    pub seed: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            alpha_us: 1.0,
            beta_us_per_byte: 0.001,
            gamma_us_per_byte: 0.0005,
            jitter_fraction: 0.0,
            seed: 1,
        }
    }
}

impl CostModel {
    pub fn hockney(alpha_us: f64, beta_us_per_byte: f64) -> Self {
        CostModel {
            alpha_us,
            beta_us_per_byte,
            gamma_us_per_byte: 0.0,
            jitter_fraction: 0.0,
            seed: 0,
        }
    }

    pub fn zero() -> Self {
        CostModel::hockney(0.0, 0.0)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        CostModel {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("alpha_us", self.alpha_us),
            ("beta_us_per_byte", self.beta_us_per_byte),
            ("gamma_us_per_byte", self.gamma_us_per_byte),
            ("jitter_fraction", self.jitter_fraction),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(format!(
                    "{name} must be a finite nonnegative number, got {value}"
                ));
            }
        }
        Ok(())
    }

    /// Transfer time of one message. `jitter` is a uniform sample in `[0, 1)`.
    pub fn message_ns(&self, bytes: usize, jitter: f64) -> u64 {
        let alpha = self.alpha_us * (1.0 + self.jitter_fraction * jitter);
        us_to_ns(alpha + self.beta_us_per_byte * bytes as f64)
    }

    pub fn reduce_ns(&self, bytes: usize) -> u64 {
        us_to_ns(self.gamma_us_per_byte * bytes as f64)
    }

    /// Jitter sample for the `ordinal`-th message on the ordered pair `(src, dst)`.
    ///
    /// Each pair reads its own ChaCha stream, so the value does not depend on
    /// the order in which ranks happen to be scheduled.
    pub fn jitter_sample(&self, src: usize, dst: usize, ordinal: u64) -> f64 {
        if self.jitter_fraction == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((src as u64) << 32) | dst as u64);
        rng.set_word_pos(u128::from(ordinal) * 2);
        rng.gen::<f64>()
    }
}

pub fn us_to_ns(us: f64) -> u64 {
    (us * 1000.0).round() as u64
}

pub fn ns_to_us(ns: u64) -> f64 {
    ns as f64 / 1000.0
}

/// Derives an independent seed from `base` and a tag path.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut seed = base;
    for &tag in tags {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(tag);
        seed = rng.next_u64();
    }
    seed
}
