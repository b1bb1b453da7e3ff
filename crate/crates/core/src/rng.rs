//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by a 64-bit seed
//! (expanded with `SeedableRng::seed_from_u64`) and a 64-bit stream id. Stream
//! ids are the FNV-1a hash of a name, optionally mixed with an index, so two
//! implementations that agree on names reproduce the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the UTF-8 bytes of `name`.
pub fn stream_id(name: &str) -> u64 {
    fnv1a(FNV_OFFSET, name.as_bytes())
}

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Generator for the named stream.
pub fn stream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// Generator for item `index` of the named stream family.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(stream_id(name), &index.to_le_bytes()));
    rng
}

/// Derive a child seed from a parent seed and a list of 64-bit words.
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    for w in words {
        h = fnv1a(h, &w.to_le_bytes());
    }
    h
}
