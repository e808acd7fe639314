//! Seeded random substreams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by
//! `(seed, domain, index)`. Work items (snapshots, node paths, replicates)
//! each own one stream, so results do not depend on evaluation order or on
//! the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share a key.
pub mod domain {
    pub const GRAPH: u64 = 1;
    pub const LATENT: u64 = 2;
    pub const BOOTSTRAP_INDEX: u64 = 3;
    pub const BOOTSTRAP_GRAPH: u64 = 4;
    pub const LANCZOS_START: u64 = 5;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a seed with a domain tag (and optional extra key words) into a
/// derived 64-bit seed.
pub fn derive_seed(seed: u64, domain: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(domain));
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// Independent generator for work item `index` of `domain` under `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, &[]));
    rng.set_stream(index);
    rng
}
