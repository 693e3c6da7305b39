//! Every pair of distinct 8-bit segments under 1000 seeds, N = 1024.

use std::collections::HashSet;

use num_bigint::BigUint;
use rename_core::byz::SegmentHash;
use rename_core::net::rng::SharedRandomness;

#[test]
fn no_collisions_among_all_8_bit_segments() {
    let width = 8 * 10; // 8·⌈log₂ 1024⌉
    let mut colliding_seeds = 0;
    for seed in 0..1000u64 {
        let h = SegmentHash::for_iteration(&SharedRandomness::new(seed), 0, width);
        let mut seen = HashSet::new();
        let mut clash = false;
        for word in 0u32..256 {
            let bits: Vec<bool> = (0..8).map(|k| word & (1 << k) != 0).collect();
            clash |= !seen.insert(h.hash_bits(&bits));
        }
        colliding_seeds += clash as u32;
    }
    // at least a (1 - 2^-10) fraction of 1000 seeds, i.e. all of them
    assert!(1000.0 - colliding_seeds as f64 >= 1000.0 * (1.0 - 1.0 / 1024.0), "{colliding_seeds} seeds collided");
}

#[test]
fn fingerprints_fit_the_wire_width() {
    let h = SegmentHash::for_iteration(&SharedRandomness::new(3), 7, 80);
    for word in [0u32, 1, 0x80, 0xff] {
        let bits: Vec<bool> = (0..8).map(|k| word & (1 << k) != 0).collect();
        let limbs = h.hash_bits(&bits);
        let mut bytes = Vec::new();
        for l in limbs {
            bytes.extend_from_slice(&l.to_be_bytes());
        }
        assert!(BigUint::from_bytes_be(&bytes).bits() <= 80);
    }
}
