//! Seeded, splittable random streams.
//!
//! Every consumer derives its generator from `(seed, stream)` so results do
//! not depend on the order in which records or layers are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// ChaCha8 keyed by `seed`, positioned on an independent `stream`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a record index and a purpose tag into one stream id.
pub fn record_stream(record: u64, purpose: u8) -> u64 {
    (record << 8) | purpose as u64
}
