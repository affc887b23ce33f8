//! Deterministic derivation of independent RNG streams from a base seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with a key path such as `[repetition, agent, round]`.
/// Distinct paths give statistically unrelated seeds.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    let mut state = splitmix(base.wrapping_add(GOLDEN));
    for (i, &k) in keys.iter().enumerate() {
        state = splitmix(state ^ splitmix(k.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 2))));
    }
    state
}

pub fn rng_for(base: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, keys))
}
