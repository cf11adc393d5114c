//! Counter-based randomness.
//!
//! Every random quantity in the crate is a pure function of an [`RngKey`]
//! and a counter, so results never depend on evaluation order or on how
//! work is scheduled. Keys form a tree: [`RngKey::derive`] produces an
//! independent child key for an index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngKey(u64);

impl RngKey {
    pub const fn new(seed: u64) -> Self {
        RngKey(seed)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// Child key for `index`. Distinct indices give statistically
    /// independent streams.
    pub fn derive(self, index: u64) -> Self {
        RngKey(mix(mix(self.0 ^ GOLDEN) ^ mix(index.wrapping_add(0x632B_E59B_D9B4_E019))))
    }

    pub fn derive_path(self, path: &[u64]) -> Self {
        path.iter().fold(self, |k, &i| k.derive(i))
    }

    #[inline]
    pub fn bits(self, counter: u64) -> u64 {
        mix(self.0 ^ mix(counter.wrapping_mul(GOLDEN).wrapping_add(1)))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(self, counter: u64) -> f64 {
        (self.bits(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, 1]`, both endpoints reachable at 32-bit resolution.
    #[inline]
    pub fn uniform_closed_f32(self, counter: u64) -> f32 {
        const MAX: u32 = (1 << 24) - 1;
        ((self.bits(counter) >> 40) as u32 as f32) / MAX as f32
    }

    /// Sequential generator for code that draws a variable number of values.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.0))
    }
}
