//! Deterministic seed derivation.
//!
//! Every random decision in a run is drawn from a ChaCha stream whose seed is
//! derived from the master seed plus a fixed stream label and context words.
//! This makes searches reproducible bit-for-bit, lets checkpoint resume rebuild
//! the exact RNG for any generation without persisting RNG state, and keeps
//! parallel and serial evaluation schedules identical.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Stream labels keep independent consumers of the master seed decorrelated.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    /// Initial population genomes.
    Init,
    /// GA operators (selection, crossover, mutation) for one generation.
    Operators(u64),
    /// Fitness evaluation for (generation, slot).
    Eval(u64, u64),
    /// Model parameter initialization.
    ModelInit,
    /// Dropout masks for one training run.
    Dropout,
    /// Per-epoch shuffling.
    Shuffle(u64),
    /// Train/validation split.
    Split,
    /// Synthetic dataset generation.
    Synthetic,
}

impl Stream {
    fn words(self) -> (u64, u64, u64) {
        match self {
            Stream::Init => (1, 0, 0),
            Stream::Operators(generation) => (2, generation, 0),
            Stream::Eval(generation, slot) => (3, generation, slot),
            Stream::ModelInit => (4, 0, 0),
            Stream::Dropout => (5, 0, 0),
            Stream::Shuffle(epoch) => (6, epoch, 0),
            Stream::Split => (7, 0, 0),
            Stream::Synthetic => (8, 0, 0),
        }
    }
}

/// SplitMix64 finalizer; a good 64-bit mixer for combining seed words.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from the master seed and a stream label.
pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    let (a, b, c) = stream.words();
    let mut s = splitmix64(master ^ splitmix64(a));
    s = splitmix64(s ^ splitmix64(b));
    splitmix64(s ^ splitmix64(c))
}

/// Build the RNG for a derived stream.
pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}

/// Build an RNG directly from a seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
