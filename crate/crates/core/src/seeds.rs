//! Deterministic random substreams.
//!
//! Every consumer of randomness derives its own generator from the user
//! seed, a domain tag and an index (tree number, fold number, trial
//! number). Streams are fixed before any work is dispatched, so results do
//! not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const BOOTSTRAP: u64 = 1;
pub(crate) const SPLIT: u64 = 2;
pub(crate) const FOLDS: u64 = 3;
pub(crate) const TUNER: u64 = 4;
pub(crate) const CV_FOREST: u64 = 5;

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a plain seed for `(domain, index)`.
pub(crate) fn derive(seed: u64, domain: u64, index: u64) -> u64 {
    mix(mix(seed ^ mix(domain)) ^ index)
}

pub(crate) fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(domain)));
    rng.set_stream(index);
    rng
}
