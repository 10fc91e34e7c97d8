//! Hierarchical RNG streams. Every (cell, consumer) pair gets its own
//! ChaCha stream derived by hashing the cell seed with the consumer's name,
//! so adding a new consumer never perturbs existing streams and any cell
//! replays bit-for-bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

const NAMESPACE: &[u8] = b"legible-marl.streams.v1";

/// Independent, reproducible stream for one named consumer under a seed.
pub fn stream_rng(seed: u64, consumer: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(NAMESPACE);
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]); // separator so (seed, name) pairs cannot collide
    hasher.update(consumer.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha12Rng::from_seed(digest)
}

/// Stream names used by the training loops.
pub fn agent_stream_name(agent: usize) -> String {
    format!("agent.{agent}")
}

pub const ENV_STREAM: &str = "env";
