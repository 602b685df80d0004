//! Seed derivation.
//!
//! A run seed `s` drives one ChaCha8 key; the environment reads stream 0 of
//! that key and agent `n` reads stream `n + 1`. Run `r` of a batch uses
//! `derive(master, r)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer over `parent` and `index`.
pub fn derive(parent: u64, index: u64) -> u64 {
    let mut z = parent
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn env_rng(run_seed: u64) -> ChaCha8Rng {
    stream(run_seed, 0)
}

pub fn agent_rng(run_seed: u64, player: usize) -> ChaCha8Rng {
    stream(run_seed, player as u64 + 1)
}

fn stream(run_seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(id);
    rng
}
