//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! stream keyed by a seed derived from `(root, index, purpose)`, so trials
//! never share a stream and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Distinct purposes of the same trial
/// never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Trial = 1,
    Ensemble = 2,
    Signal = 3,
    Corruption = 4,
    Noise = 5,
    PowerStart = 6,
    Masks = 7,
    Channel = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(root, index, purpose)`.
pub fn derive_seed(root: u64, index: u64, purpose: Purpose) -> u64 {
    let a = splitmix64(root ^ 0x5DEE_CE66_D1CE_4E5B);
    let b = splitmix64(a ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ (purpose as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
