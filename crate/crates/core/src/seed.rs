//! Deterministic seeding.
//!
//! Every stochastic operation in the crate draws from a [`ChaCha8Rng`] that is
//! derived from a root seed and a purpose tag, so independent consumers
//! (initialization, sampling, splits, classifier seeds) never share a stream
//! and reordering one consumer does not perturb another.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

static GLOBAL_SEED: AtomicU64 = AtomicU64::new(0);

/// Sets the process-wide root seed used by [`global_rng`].
pub fn set_global_seed(seed: u64) {
    GLOBAL_SEED.store(seed, Ordering::SeqCst);
}

pub fn global_seed() -> u64 {
    GLOBAL_SEED.load(Ordering::SeqCst)
}

/// Stream for `tag` derived from the process-wide root seed.
pub fn global_rng(tag: &str) -> Rng {
    derive_rng(global_seed(), tag)
}

/// Independent stream for `(seed, tag)`.
pub fn derive_rng(seed: u64, tag: &str) -> Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag))
}

/// Child seed for `(seed, tag)`; used where a plain integer seed is needed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    mix(seed, tag)
}

// FNV-1a over the tag, folded into the seed with a splitmix64 finalizer.
fn mix(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h.rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
