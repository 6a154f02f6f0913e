// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::prng::Rng;

/// Replace each byte independently, with probability `rate`, by a uniformly
/// random byte (which may equal the original). Length is preserved.
pub fn paraphrase_perturb(tokens: &[u8], rate: f64, rng: &mut Rng) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Domain(format!("perturbation rate must be in [0, 1], got {rate}")));
    }
    Ok(tokens
        .iter()
        .map(|&b| {
            if rng.random_bool(rate) {
                rng.random::<u8>()
            } else {
                b
            }
        })
        .collect())
}

/// Uniform random bytes.
pub fn random_bytes(len: usize, rng: &mut Rng) -> Vec<u8> {
    (0..len).map(|_| rng.random::<u8>()).collect()
}
