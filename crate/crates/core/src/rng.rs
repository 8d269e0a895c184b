//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha` 0.9) keyed by the
//! experiment seed, with the 64-bit stream id derived from a list of
//! integer keys such as `(n, replication, purpose)`. Streams with distinct
//! keys are independent and do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies the generator family so recorded experiments can be replayed.
pub const GENERATOR: &str = "chacha8/rand_chacha-0.9/splitmix-keyed";

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for `(seed, keys)`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = keys
        .iter()
        .fold(0x5eed_u64, |acc, k| splitmix(acc ^ splitmix(*k)));
    rng.set_stream(id);
    rng
}
