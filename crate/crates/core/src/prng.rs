// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded random streams.
//!
//! The only generator is xoshiro256** seeded through SplitMix64, which gives
//! the same stream on every platform for a given seed.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

pub type Rng = Xoshiro256StarStar;

pub const ALGORITHM: &str = "xoshiro256**/splitmix64";

/// Named generator plus seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrngSpec {
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    pub seed: u64,
}

fn default_algorithm() -> String {
    ALGORITHM.to_string()
}

impl Default for PrngSpec {
    fn default() -> Self {
        Self::new(42)
    }
}

impl PrngSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            algorithm: ALGORITHM.to_string(),
            seed,
        }
    }

    pub fn rng(&self) -> Rng {
        Xoshiro256StarStar::seed_from_u64(self.seed)
    }

    /// Independent stream derived from this seed, for sub-tasks that must not
    /// consume the parent stream.
    pub fn derive(&self, stream: u64) -> PrngSpec {
        // splitmix64 finalizer over (seed, stream)
        let mut z = self
            .seed
            .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        PrngSpec::new(z ^ (z >> 31))
    }

    pub fn is_supported(&self) -> bool {
        self.algorithm == ALGORITHM
    }
}
