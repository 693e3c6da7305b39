//! Seeded polynomial fingerprints of identity-list segments.
//!
//! A segment with ones at offsets `k₁ < k₂ < …` hashes to
//! `a·Σ r^kᵢ + b mod p`, `p = 2^256 − 189`, truncated to the wire width.
//! Two distinct segments of length `k` collide before truncation with
//! probability at most `k/p`.

use crypto_bigint::{Limb, U256};

use crate::net::rng::{DrawKind, SharedRandomness};

/// `p = 2^256 − SPECIAL`, the largest 256-bit prime.
const SPECIAL: u32 = 189;

fn modulus() -> U256 {
    U256::MAX.wrapping_sub(&U256::from_u32(SPECIAL - 1))
}

fn reduce(x: U256) -> U256 {
    let p = modulus();
    if x >= p {
        x.wrapping_sub(&p)
    } else {
        x
    }
}

fn mul(a: &U256, b: &U256) -> U256 {
    a.mul_mod_special(b, Limb::from_u32(SPECIAL))
}

fn pow(base: &U256, mut e: u64) -> U256 {
    let mut acc = U256::ONE;
    let mut b = *base;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(&acc, &b);
        }
        b = mul(&b, &b);
        e >>= 1;
    }
    acc
}

fn from_words(w: &[u64]) -> U256 {
    let mut limbs = [0u64; 4];
    limbs.copy_from_slice(w);
    reduce(U256::from_words(limbs))
}

/// One hash function, fixed by `(master_seed, iteration)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentHash {
    r: U256,
    a: U256,
    b: U256,
    width: u32,
}

impl SegmentHash {
    pub fn new(r: U256, a: U256, b: U256, width: u32) -> Self {
        assert!(width <= 256);
        SegmentHash { r: reduce(r), a: reduce(a), b: reduce(b), width }
    }

    /// Fresh function for while-iteration `iteration`, identical at every member.
    pub fn for_iteration(shared: &SharedRandomness, iteration: u64, width: u32) -> Self {
        let w = shared.words(DrawKind::SegmentHash, iteration, 12);
        let mut a = from_words(&w[4..8]);
        if a == U256::ZERO {
            a = U256::ONE;
        }
        SegmentHash::new(from_words(&w[0..4]), a, from_words(&w[8..12]), width)
    }

    /// Hash of the segment starting at `lo` whose ones sit at `ones` (sorted, all `≥ lo`).
    pub fn hash_ones(&self, lo: u32, ones: &[u32]) -> [u64; 4] {
        let mut sum = U256::ZERO;
        let mut last = lo;
        let mut power = U256::ONE;
        for &i in ones {
            debug_assert!(i >= last);
            power = mul(&power, &pow(&self.r, (i - last) as u64));
            last = i;
            sum = sum.add_mod(&power, &modulus());
        }
        let h = mul(&self.a, &sum).add_mod(&self.b, &modulus());
        truncate(h, self.width)
    }

    /// Hash of an explicit bit string, bit `k` at offset `k`.
    pub fn hash_bits(&self, bits: &[bool]) -> [u64; 4] {
        let ones: alloc::vec::Vec<u32> = bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i as u32).collect();
        self.hash_ones(0, &ones)
    }
}

/// Low `width` bits as big-endian limbs.
fn truncate(x: U256, width: u32) -> [u64; 4] {
    let le = x.to_words();
    let mut out = [le[3], le[2], le[1], le[0]];
    for (k, limb) in out.iter_mut().enumerate() {
        let low = 64 * (3 - k as u32);
        if low >= width {
            *limb = 0;
        } else if width - low < 64 {
            *limb &= (1u64 << (width - low)) - 1;
        }
    }
    out
}
