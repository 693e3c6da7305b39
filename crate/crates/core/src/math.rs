//! Integer logarithms and clamped probabilities.

/// `⌈log₂ x⌉` for `x ≥ 1`; `ceil_log2(1) == 0`.
pub fn ceil_log2(x: u64) -> u32 {
    assert!(x >= 1, "ceil_log2 of zero");
    if x == 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Bits needed to store every value in `0..=max`.
pub fn bits_for(max: u64) -> u32 {
    64 - max.leading_zeros()
}

/// Real-valued `log₂ x`.
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

/// Returns `p` clamped into `[0, 1]`.
pub fn clamp_probability(p: f64) -> f64 {
    if p.is_nan() || p < 0.0 {
        0.0
    } else if p > 1.0 {
        1.0
    } else {
        p
    }
}

/// Maps a uniform 64-bit word to a Bernoulli(p) outcome.
///
/// `p ≥ 1` always succeeds and `p ≤ 0` never does, so a clamped probability
/// of one is a certain event rather than "almost surely".
pub fn bernoulli_from_word(word: u64, p: f64) -> bool {
    if p >= 1.0 {
        return true;
    }
    if p <= 0.0 || p.is_nan() {
        return false;
    }
    // 53 high bits give a uniform double in [0, 1).
    let u = (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    u < p
}
