//! Seeded random streams.
//!
//! Every generator draws from ChaCha8 seeded with `seed_from_u64(seed)` on a
//! dedicated stream, so the same integer seed can drive the phantom, the
//! mask and the acquisition noise without the draws overlapping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const MASK_STREAM: u64 = 1;
pub const PHANTOM_STREAM: u64 = 2;
pub const NOISE_STREAM: u64 = 3;
pub const INIT_STREAM: u64 = 4;
pub const SHUFFLE_STREAM: u64 = 5;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
