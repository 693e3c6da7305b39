//! Shared and private randomness derived from one master seed.
//!
//! All streams come from a single ChaCha8 key expanded from the master seed.
//! Stream numbers separate the shared draw kinds, the per-node private streams
//! and the environment streams (id assignment, adversary choices), so none of
//! them can observe another's words.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::wire::{BitSink, BitString};
use crate::math::bernoulli_from_word;

/// 64-bit words reserved per shared draw index.
pub const WORDS_PER_DRAW: u64 = 16;

const PRIVATE_BASE: u64 = 1 << 40;
const ENV_BASE: u64 = 1 << 48;

/// Label of a shared draw family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DrawKind {
    CommitteeLottery,
    SegmentHash,
    KingPriority,
    Custom(u32),
}

impl DrawKind {
    fn stream(self) -> u64 {
        match self {
            DrawKind::CommitteeLottery => 1,
            DrawKind::SegmentHash => 2,
            DrawKind::KingPriority => 3,
            DrawKind::Custom(x) => 1024 + x as u64,
        }
    }
}

/// Environment streams that are neither shared nor owned by a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvStream {
    IdAssignment,
    ByzantineSet,
    Adversary,
}

impl EnvStream {
    fn stream(self) -> u64 {
        ENV_BASE
            + match self {
                EnvStream::IdAssignment => 1,
                EnvStream::ByzantineSet => 2,
                EnvStream::Adversary => 3,
            }
    }
}

fn base_rng(master_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master_seed)
}

/// Random-access shared bits visible to every node, Byzantine ones included.
#[derive(Clone, Debug)]
pub struct SharedRandomness {
    master_seed: u64,
    stream_counter: u64,
    base: ChaCha8Rng,
}

impl SharedRandomness {
    pub fn new(master_seed: u64) -> Self {
        SharedRandomness { master_seed, stream_counter: 0, base: base_rng(master_seed) }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_counter(&self) -> u64 {
        self.stream_counter
    }

    fn positioned(&self, kind: DrawKind, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(kind.stream());
        // word_pos counts 32-bit words
        rng.set_word_pos(index as u128 * WORDS_PER_DRAW as u128 * 2);
        rng
    }

    /// Word `j` (`j < WORDS_PER_DRAW`) of draw `(kind, index)`.
    pub fn word(&self, kind: DrawKind, index: u64, j: u32) -> u64 {
        assert!((j as u64) < WORDS_PER_DRAW);
        let mut rng = self.positioned(kind, index);
        for _ in 0..j {
            rng.next_u64();
        }
        rng.next_u64()
    }

    /// The first `count` words of draw `(kind, index)`.
    pub fn words(&self, kind: DrawKind, index: u64, count: usize) -> Vec<u64> {
        assert!(count as u64 <= WORDS_PER_DRAW);
        let mut rng = self.positioned(kind, index);
        (0..count).map(|_| rng.next_u64()).collect()
    }

    /// `width` uniform bits for `(kind, index)`; identical at every caller.
    pub fn shared_draw(&self, kind: DrawKind, index: u64, width: u32) -> BitString {
        assert!(width as u64 <= WORDS_PER_DRAW * 64);
        let mut rng = self.positioned(kind, index);
        let mut out = BitString::new();
        let mut left = width;
        while left > 0 {
            let take = left.min(64);
            let w = rng.next_u64();
            out.put(if take == 64 { w } else { w >> (64 - take) }, take);
            left -= take;
        }
        out
    }

    /// Bernoulli(p) outcome of draw `(kind, index)`, thresholded on its first word.
    pub fn lottery(&self, kind: DrawKind, index: u64, p: f64) -> bool {
        bernoulli_from_word(self.word(kind, index, 0), p)
    }

    /// Next sequential index of `kind`; callers draw in lockstep so the counter
    /// agrees everywhere.
    pub fn next_index(&mut self) -> u64 {
        let i = self.stream_counter;
        self.stream_counter += 1;
        i
    }
}

/// Private stream of one node.
pub fn private_stream(master_seed: u64, node: u64) -> ChaCha8Rng {
    let mut rng = base_rng(master_seed);
    rng.set_stream(PRIVATE_BASE + node);
    rng
}

pub fn env_stream(master_seed: u64, which: EnvStream) -> ChaCha8Rng {
    let mut rng = base_rng(master_seed);
    rng.set_stream(which.stream());
    rng
}

/// splitmix64 finaliser, used to expand one shared word into many keyed values.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
