//! Seed derivation.
//!
//! Every random stream in a run is derived from the master seed through a
//! counter-based mix, so any component (partitioning, client sampling, a
//! single client's epoch draw) can be reproduced without replaying the rest
//! of the run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed. Order matters.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags for the seed tree.
const DATA: u64 = 1;
const PARTITION: u64 = 2;
const INIT: u64 = 3;
const SAMPLING: u64 = 4;
const EPOCHS: u64 = 5;
const CLIENT: u64 = 6;
const REPEAT: u64 = 7;

/// Derives every per-run seed from a single master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// Master seed for the `repeat`-th independent repetition of an experiment.
    pub fn repeat_master(master: u64, repeat: u64) -> u64 {
        mix(&[master, REPEAT, repeat])
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn data(&self) -> u64 {
        mix(&[self.master, DATA])
    }

    pub fn partition(&self) -> u64 {
        mix(&[self.master, PARTITION])
    }

    pub fn init(&self) -> u64 {
        mix(&[self.master, INIT])
    }

    pub fn sampling(&self) -> u64 {
        mix(&[self.master, SAMPLING])
    }

    pub fn epochs(&self) -> u64 {
        mix(&[self.master, EPOCHS])
    }

    /// Initial shuffle stream of one client.
    pub fn client(&self, client_id: usize) -> u64 {
        mix(&[self.master, CLIENT, client_id as u64])
    }
}
