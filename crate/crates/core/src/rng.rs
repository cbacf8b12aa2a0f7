//! Seed handling. Every random draw in the crate comes from ChaCha8, which is
//! specified bit-for-bit and therefore reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of sample `index` in a dataset with base seed `base`.
pub fn sample_seed(base: u64, index: u64) -> u64 {
    base ^ index
}

/// Base seed of the validation split; its seeds never collide with those of
/// a training split of fewer than 2^63 samples.
pub fn validation_seed(base: u64) -> u64 {
    base ^ (1 << 63)
}
