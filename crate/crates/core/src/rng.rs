// SPDX-License-Identifier: Apache-2.0

//! Labelled random substreams.
//!
//! Every run owns a root seed. Components never share a generator; each one
//! derives its own ChaCha stream from `(seed, label, index)`, so changing how
//! much randomness one component consumes leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub const INIT: &str = "init";
pub const SCHEDULE: &str = "schedule";
pub const AUGMENT: &str = "augment";
pub const BUFFER: &str = "buffer";
pub const DATA: &str = "data";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, label: &str) -> StreamRng {
        self.indexed(label, 0)
    }

    pub fn indexed(&self, label: &str, index: u64) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(index.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(key)
    }
}

/// The per-run generators consumed while training.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub init: StreamRng,
    pub schedule: StreamRng,
    pub augment: StreamRng,
    pub buffer: StreamRng,
}

impl RunStreams {
    pub fn new(tree: SeedTree) -> Self {
        Self {
            init: tree.stream(INIT),
            schedule: tree.stream(SCHEDULE),
            augment: tree.stream(AUGMENT),
            buffer: tree.stream(BUFFER),
        }
    }
}
