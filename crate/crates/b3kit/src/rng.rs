//! Counter-based splittable random number generation.
//!
//! [`RngStream`] produces the value at position `counter` of a keyed
//! sequence, where the key is derived once from `(master_seed, stream_id)`.
//! The word at any `(master_seed, stream_id, counter)` triple is a pure
//! function of the triple, so trials can be split into independent streams
//! and replayed from any position without touching each other's state.
//!
//! The generator is the SplitMix64 construction: the raw state at position
//! `n` is `key + n * GAMMA` and the output word is the SplitMix64 finalizer
//! applied to that state. Not cryptographically secure.

use crate::error::{Error, Result};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xA076_1D64_78BD_642F;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based random stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    counter: u64,
    key: u64,
}

impl RngStream {
    /// Stream `stream_id` of the generator seeded with `master_seed`,
    /// positioned at counter 0.
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self::at(master_seed, stream_id, 0)
    }

    /// Stream positioned at an explicit counter.
    pub fn at(master_seed: u64, stream_id: u64, counter: u64) -> Self {
        let key = mix64(mix64(master_seed ^ STREAM_SALT) ^ mix64(stream_id.wrapping_mul(GAMMA) ^ STREAM_SALT));
        Self {
            master_seed,
            stream_id,
            counter,
            key,
        }
    }

    /// Child stream keyed by `salt`; independent of `self` and of children
    /// derived with other salts. Does not advance `self`.
    pub fn derive(&self, salt: u64) -> Self {
        Self::new(
            self.master_seed,
            mix64(self.stream_id ^ salt.wrapping_mul(GAMMA).wrapping_add(STREAM_SALT)),
        )
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Next 64-bit word; advances the counter by one.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform double in the open interval (0, 1), 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `[0, n)`; `n` must be nonzero.
    pub fn index_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// One draw from N(mean, std²) via the Box–Muller transform.
    /// Consumes exactly two words, so positions stay aligned across replays.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        mean + std * r * (std::f64::consts::TAU * u2).cos()
    }

    /// `n` Gaussian draws; `std` must be non-negative. `std = 0` yields the
    /// degenerate point mass at `mean`.
    pub fn normal_vec(&mut self, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
        if !std.is_finite() || std < 0.0 {
            return Err(Error::parameter(
                "std",
                format!("standard deviation must be finite and >= 0, got {std}"),
            ));
        }
        Ok((0..n).map(|_| self.normal(mean, std)).collect())
    }
}
