//! Counter-based random streams.
//!
//! Every random draw in the library is addressed by `(seed, domain, index, word)`:
//! the ChaCha key is built from `seed` and `domain`, the stream id is `index`
//! and words are consumed sequentially. Results therefore never depend on the
//! order in which paths or trials are evaluated.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

pub const DOMAIN_BROWNIAN: u64 = 0;
/// Bridge refinement from level `l` to `l + 1` uses `DOMAIN_REFINE + l`.
pub const DOMAIN_REFINE: u64 = 1;
pub const DOMAIN_TRIALS: u64 = 1 << 32;
pub const DOMAIN_AUX: u64 = 1 << 33;

pub struct CounterStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl CounterStream {
    pub fn new(seed: u64, domain: u64, index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&domain.to_le_bytes());
        key[16..24].copy_from_slice(b"swlp-rng");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        Self { rng, normal: Normal::standard() }
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion.
    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }
}
