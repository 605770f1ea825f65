//! Independent random streams derived from one run seed.
//!
//! Every consumer draws from its own ChaCha stream so that, for example,
//! evaluation noise never correlates with training augmentation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SHUFFLE: u64 = 1;
pub const AUGMENT: u64 = 2;
pub const VALIDATION_SPLIT: u64 = 3;
pub const BOOTSTRAP: u64 = 4;
/// Evaluation-time noise; level `i` of a sweep uses `EVAL_NOISE + i`.
pub const EVAL_NOISE: u64 = 1 << 32;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
