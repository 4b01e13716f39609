//! Seed derivation for named random substreams.
//!
//! Every command takes a single seed; independent consumers (dataset
//! synthesis, weight init, batch shuffling, ...) derive their own stream from
//! it so that changing one never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named substreams used across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dataset,
    Noise,
    Init,
    Shuffle,
    Split,
    Dropout,
    Sweep,
}

impl Stream {
    fn tag(self) -> &'static str {
        match self {
            Stream::Dataset => "dataset",
            Stream::Noise => "noise",
            Stream::Init => "init",
            Stream::Shuffle => "shuffle",
            Stream::Split => "split",
            Stream::Dropout => "dropout",
            Stream::Sweep => "sweep",
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed for `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    // FNV-1a over the stream tag
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.tag().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(splitmix64(base ^ h) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn stream_rng(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}
