//! Named RNG substreams.
//!
//! Every random draw in the toolkit flows from one top-level seed. Each
//! consumer (dataset synthesis, weight init, shuffling, channels, protocol)
//! derives its own generator from `(seed, name, index)` so that adding a
//! consumer or reordering shards never perturbs another stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

pub const DATASET: &str = "dataset";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const CHANNEL: &str = "channel";
pub const PROTOCOL: &str = "protocol";

/// Derives an independent generator for `(seed, name, index)`.
pub fn substream(seed: u64, name: &str, index: u64) -> SimRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(digest.as_slice());
    SimRng::from_seed(key)
}
