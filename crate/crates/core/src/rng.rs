//! Named random substreams.
//!
//! Every consumer of randomness (dictionary draw, training data, held-out
//! data, initialization of each arm) gets its own ChaCha stream keyed by
//! `(seed, label)`, so adding or removing a consumer never shifts another
//! consumer's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

pub fn substream(seed: u64, label: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha20Rng::from_seed(key)
}
