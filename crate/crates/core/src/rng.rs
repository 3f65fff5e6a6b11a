//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha`), which produces the
//! same sequence on every platform for a given 64-bit seed. Sub-streams are
//! derived from a parent seed with
//!
//! ```text
//! child_seed = first 8 bytes (little-endian) of
//!              SHA-256(parent_seed_le || purpose_tag_utf8 || 0x00 || index_le)
//! ```
//!
//! so that e.g. environment `i`, weight init and exploration noise never share
//! draws, and adding a new consumer never perturbs existing ones.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Purpose tags used by the training files.
pub mod tags {
    pub const ENV: &str = "env";
    pub const INIT: &str = "init";
    pub const EXPLORE: &str = "explore";
    pub const MINIBATCH: &str = "minibatch";
    pub const REPLAY: &str = "replay";
    pub const POLICY: &str = "policy";
}

/// Derives a child seed from `(parent, tag, index)`.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for `(tag, index)` derived from this stream's seed.
    ///
    /// Does not consume draws from `self`.
    pub fn child(&self, tag: &str, index: u64) -> Rng {
        Rng::new(derive_seed(self.seed, tag, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[low, high)`.
    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}
