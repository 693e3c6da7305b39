//! Byzantine-resilient order-preserving renaming over a shared-randomness
//! committee that agrees on the identity list segment by segment.

pub mod consensus;
pub mod hash;
pub mod list;
mod protocol;
pub mod validator;

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math::log2;
use crate::net::wire::{put_field, put_one_based, take_one_based, BitReader, BitSink, DecodeError, EncodeError};
use crate::net::{MessageKind, WireMessage, WireWidths};

pub use consensus::{choose_king, ConsensusNode, Vote, VoteTally};
pub use hash::SegmentHash;
pub use list::IdentityList;
pub use protocol::{run_byzantine_protocol, ByzRun, ByzRunOptions, CommitteeStats, FailureCause, Stage};
pub use validator::Tally;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ByzParamError {
    #[error("epsilon0 = {0} must lie in (0, 1/3)")]
    Epsilon(f64),
    #[error("p0 override {0} must lie in (0, 1]")]
    P0(f64),
    #[error("N = {0} must be below 2^31")]
    NamespaceTooLarge(u64),
    #[error("need 1 <= n <= N, got n = {n}, N = {big_n}")]
    Sizes { n: u32, big_n: u64 },
}

/// Committee thresholds for one `(n, N, ε₀)` instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByzParams {
    pub n: u32,
    pub big_n: u64,
    pub epsilon0: f64,
    pub p0: f64,
    /// Lower bound on correct members driving every majority vote.
    pub c_g: f64,
    pub c_hat_g: f64,
    pub f_bound: u32,
}

impl ByzParams {
    pub fn new(n: u32, big_n: u64, epsilon0: f64, p0_override: Option<f64>) -> Result<Self, ByzParamError> {
        if !(epsilon0 > 0.0 && epsilon0 < 1.0 / 3.0) {
            return Err(ByzParamError::Epsilon(epsilon0));
        }
        if n == 0 || big_n < n as u64 {
            return Err(ByzParamError::Sizes { n, big_n });
        }
        if big_n >= 1 << 31 {
            return Err(ByzParamError::NamespaceTooLarge(big_n));
        }
        let nf = n as f64;
        let p0 = match p0_override {
            Some(p) if p > 0.0 && p <= 1.0 => p,
            Some(p) => return Err(ByzParamError::P0(p)),
            None => Self::raw_p0(n, epsilon0).min(1.0),
        };
        let c_g = (1.0 - 1.5 * epsilon0) * (2.0 / 3.0 + epsilon0) * p0 * nf;
        let c_hat_g = nf.min(4.0 * p0 * nf);
        let f_bound = (libm::ceil((1.0 / 3.0 - epsilon0) * nf) as u32).saturating_sub(1);
        Ok(ByzParams { n, big_n, epsilon0, p0, c_g, c_hat_g, f_bound })
    }

    /// Unclamped election probability `8·log₂n / ((1−3ε₀)·ε₀²·n)`.
    pub fn raw_p0(n: u32, epsilon0: f64) -> f64 {
        let nf = n as f64;
        8.0 * log2(nf) / ((1.0 - 3.0 * epsilon0) * epsilon0 * epsilon0 * nf)
    }

    /// Phase-king phases per consensus instance: `⌊c_g/2⌋ + 1`.
    pub fn consensus_phases(&self) -> u32 {
        libm::floor(self.c_g / 2.0) as u32 + 1
    }

    pub fn consensus_rounds(&self) -> u32 {
        3 * self.consensus_phases()
    }

    pub fn widths(&self) -> WireWidths {
        WireWidths::new(self.n, self.big_n)
    }

    /// `count ≥ c_g`
    pub fn reaches(&self, count: u32) -> bool {
        count as f64 >= self.c_g
    }

    /// `count > c_g/2`
    pub fn exceeds_half(&self, count: u32) -> bool {
        count as f64 > self.c_g / 2.0
    }
}

/// `⟨hash, count⟩` of one identity-list segment. The hash is a big-endian
/// 256-bit value truncated to the wire width, so the derived order is numeric.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Fingerprint {
    pub hash: [u64; 4],
    pub cnt: u32,
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{:016x}{:016x}..;{}>", self.hash[0], self.hash[1], self.cnt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ByzMsg {
    Elect { id: u32 },
    Id { id: u32 },
    Init(Fingerprint),
    Echo(Fingerprint),
    Diff(bool),
    Vote(Vote),
    New(Option<u32>),
}

fn put_wide<S: BitSink>(hash: &[u64; 4], width: u32, sink: &mut S) -> Result<(), EncodeError> {
    for (k, limb) in hash.iter().enumerate() {
        let low = 64 * (3 - k as u32);
        if low >= width && *limb != 0 {
            return Err(EncodeError::FieldOverflow { field: "hash", value: *limb, width });
        }
    }
    let mut remaining = width;
    while remaining > 0 {
        let take = (remaining - 1) % 64 + 1;
        let limb = hash[3 - ((remaining - take) / 64) as usize];
        put_field(sink, "hash", limb, take)?;
        remaining -= take;
    }
    Ok(())
}

fn take_wide(width: u32, r: &mut BitReader<'_>) -> Result<[u64; 4], DecodeError> {
    let mut out = [0u64; 4];
    let mut remaining = width;
    while remaining > 0 {
        let take = (remaining - 1) % 64 + 1;
        out[3 - ((remaining - take) / 64) as usize] = r.take(take)?;
        remaining -= take;
    }
    Ok(out)
}

impl WireMessage for ByzMsg {
    fn kind(&self) -> MessageKind {
        match self {
            ByzMsg::Elect { .. } => MessageKind::Elect,
            ByzMsg::Id { .. } => MessageKind::IdAnnounce,
            ByzMsg::Init(_) => MessageKind::ValInit,
            ByzMsg::Echo(_) => MessageKind::ValEcho,
            ByzMsg::Diff(_) => MessageKind::DiffReport,
            ByzMsg::Vote(_) => MessageKind::ConsensusMsg,
            ByzMsg::New(_) => MessageKind::New,
        }
    }

    fn write_fields<S: BitSink>(&self, w: &WireWidths, sink: &mut S) -> Result<(), EncodeError> {
        match self {
            ByzMsg::Elect { id } | ByzMsg::Id { id } => put_one_based(sink, "id", *id as u64, w.big_n, w.id),
            ByzMsg::Init(fp) | ByzMsg::Echo(fp) => {
                put_wide(&fp.hash, w.hash, sink)?;
                put_field(sink, "cnt", fp.cnt as u64, w.count)
            }
            ByzMsg::Diff(b) => put_field(sink, "diff", *b as u64, 1),
            ByzMsg::Vote(v) => put_field(sink, "vote", v.code(), 2),
            ByzMsg::New(None) => {
                put_field(sink, "flag", 0, 1)?;
                put_field(sink, "nid", 0, w.position)
            }
            ByzMsg::New(Some(x)) => {
                put_field(sink, "flag", 1, 1)?;
                put_one_based(sink, "nid", *x as u64, w.n as u64, w.position)
            }
        }
    }

    fn read_fields(kind: MessageKind, w: &WireWidths, r: &mut BitReader<'_>) -> Result<Self, DecodeError> {
        Ok(match kind {
            MessageKind::Elect => ByzMsg::Elect { id: take_one_based(r, "id", w.big_n, w.id)? as u32 },
            MessageKind::IdAnnounce => ByzMsg::Id { id: take_one_based(r, "id", w.big_n, w.id)? as u32 },
            MessageKind::ValInit | MessageKind::ValEcho => {
                let hash = take_wide(w.hash, r)?;
                let cnt = r.take(w.count)?;
                if cnt > w.big_n {
                    return Err(DecodeError::Invalid { field: "cnt", value: cnt });
                }
                let fp = Fingerprint { hash, cnt: cnt as u32 };
                if kind == MessageKind::ValInit {
                    ByzMsg::Init(fp)
                } else {
                    ByzMsg::Echo(fp)
                }
            }
            MessageKind::DiffReport => ByzMsg::Diff(r.take(1)? == 1),
            MessageKind::ConsensusMsg => {
                let c = r.take(2)?;
                ByzMsg::Vote(Vote::from_code(c).ok_or(DecodeError::Invalid { field: "vote", value: c })?)
            }
            MessageKind::New => {
                if r.take(1)? == 1 {
                    ByzMsg::New(Some(take_one_based(r, "nid", w.n as u64, w.position)? as u32))
                } else {
                    let pad = r.take(w.position)?;
                    if pad != 0 {
                        return Err(DecodeError::Invalid { field: "nid", value: pad });
                    }
                    ByzMsg::New(None)
                }
            }
            found => return Err(DecodeError::ForeignTag { found }),
        })
    }

    fn claimed_origin(&self) -> Option<u32> {
        match self {
            ByzMsg::Elect { id } | ByzMsg::Id { id } => Some(*id),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::wire::{decode, encode, validate};

    #[test]
    fn desk_regime_clamps_p0() {
        let p = ByzParams::new(128, 5 * 128 * 128, 0.05, None).unwrap();
        assert_eq!(p.p0, 1.0);
        assert!((p.c_g - 0.925 * (2.0 / 3.0 + 0.05) * 128.0).abs() < 1e-9);
        assert_eq!(p.c_hat_g, 128.0);
        assert_eq!(p.f_bound, 36);
        assert_eq!(p.consensus_phases(), 43);
    }

    #[test]
    fn unclamped_p0_formula() {
        let p = ByzParams::new(1 << 20, 1 << 30, 0.3, None).unwrap();
        let want = 8.0 * 20.0 / ((1.0 - 0.9) * 0.09 * (1u64 << 20) as f64);
        assert!((p.p0 - want).abs() < 1e-12);
        assert!(p.p0 < 1.0);
    }

    #[test]
    fn parameter_errors() {
        assert!(ByzParams::new(64, 1 << 31, 0.05, None).is_err());
        assert!(ByzParams::new(64, 100, 0.34, None).is_err());
        assert!(ByzParams::new(64, 100, 0.05, Some(0.0)).is_err());
        assert!(ByzParams::new(64, 32, 0.05, None).is_err());
    }

    #[test]
    fn messages_round_trip() {
        let w = WireWidths::new(128, 81920);
        let mut h = [0u64; 4];
        h[2] = 0xff; // bits 64..72 of a 136-bit hash
        h[3] = u64::MAX;
        let msgs = [
            ByzMsg::Elect { id: 81920 },
            ByzMsg::Id { id: 1 },
            ByzMsg::Init(Fingerprint { hash: h, cnt: 128 }),
            ByzMsg::Echo(Fingerprint { hash: [0; 4], cnt: 81920 }),
            ByzMsg::Diff(true),
            ByzMsg::Vote(Vote::Bottom),
            ByzMsg::New(None),
            ByzMsg::New(Some(128)),
        ];
        for m in msgs {
            let bits = encode(&m, &w).unwrap();
            assert_eq!(bits.len() as u32, m.kind().bit_len(&w));
            assert!(bits.len() as u32 <= m.kind().cap_bits(&w), "{m:?}");
            assert_eq!(decode::<ByzMsg>(&bits, &w).unwrap(), m);
        }
    }

    #[test]
    fn hash_wider_than_field_is_rejected() {
        let w = WireWidths::new(128, 81920);
        let mut h = [0u64; 4];
        h[1] = 1; // bit 128 set, but bit 136+ is fine only up to 135
        assert!(validate(&ByzMsg::Init(Fingerprint { hash: h, cnt: 0 }), &w).is_ok());
        h[1] = 1 << 8;
        assert!(validate(&ByzMsg::Init(Fingerprint { hash: h, cnt: 0 }), &w).is_err());
        assert!(validate(&ByzMsg::New(Some(129)), &w).is_err());
        assert!(validate(&ByzMsg::Elect { id: 0 }, &w).is_err());
    }
}
