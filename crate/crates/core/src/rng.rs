//! Counter-based stream derivation.
//!
//! Every consumer of randomness asks for the stream `(seed, domain, index)`,
//! where `index` is a fixed-size chunk number. The ChaCha key comes from
//! `(seed, domain)` and the ChaCha stream id is the chunk index, so the
//! numbers drawn for a chunk never depend on how work is partitioned.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_NOISE: u64 = 0x6e6f_6973_65;
pub const DOMAIN_PHOTON: u64 = 0x7068_6f74_6f6e;
pub const DOMAIN_DARK: u64 = 0x6461_726b;
pub const DOMAIN_TRAP: u64 = 0x7472_6170;
pub const DOMAIN_CASCADE: u64 = 0x6361_7363;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed, e.g. for the laser-off run of a characterization.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag)
}

pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain));
    rng.set_stream(index);
    rng
}
