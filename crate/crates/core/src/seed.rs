//! Seed fan-out: one experiment seed yields independent per-role streams.
//!
//! `derive(seed, tag)` hashes the role tag with 64-bit FNV-1a, xors it into
//! the seed and finishes with the SplitMix64 mixer. Role tags in use:
//! `"init"` and `"shuffle"` inside a training run; the command line adds
//! `"train"`, `"val"`, `"test"` for dataset draws and `"noise/<split>"` for
//! the matching noise injection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(tag: &str) -> u64 {
    tag.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ fnv1a(tag))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
