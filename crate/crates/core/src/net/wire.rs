//! Canonical fixed-width message encodings.
//!
//! Every message is a 4-bit type tag followed by its fields, each at a width
//! fixed by `(n, N)`. Ids are stored as `id - 1` in `⌈log₂N⌉` bits and
//! positions in `[1, n]` as `v - 1` in `⌈log₂n⌉` bits.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math::{bits_for, ceil_log2};

pub const TAG_BITS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("field `{field}` value {value} does not fit in {width} bits")]
    FieldOverflow { field: &'static str, value: u64, width: u32 },
    #[error("field `{field}` value {value} is outside its range")]
    OutOfRange { field: &'static str, value: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("tag {found:?} does not belong to this protocol")]
    ForeignTag { found: MessageKind },
    #[error("bit string ended early: wanted {wanted} more bits at offset {offset}")]
    Truncated { offset: usize, wanted: u32 },
    #[error("{0} trailing bits after the message")]
    Trailing(usize),
    #[error("field `{field}` decoded to invalid value {value}")]
    Invalid { field: &'static str, value: u64 },
}

/// Field widths for one `(n, N)` instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireWidths {
    pub n: u32,
    pub big_n: u64,
    /// `⌈log₂N⌉`
    pub id: u32,
    /// `⌈log₂n⌉`
    pub position: u32,
    /// `⌈log₂(3⌈log₂n⌉+2)⌉`
    pub level: u32,
    /// `8⌈log₂N⌉`
    pub hash: u32,
    /// wide enough for any count in `0..=N`
    pub count: u32,
}

impl WireWidths {
    pub fn new(n: u32, big_n: u64) -> Self {
        assert!(n >= 1 && big_n >= n as u64, "need 1 <= n <= N");
        let id = ceil_log2(big_n).max(1);
        let position = ceil_log2(n as u64).max(1);
        let level = ceil_log2(3 * ceil_log2(n as u64) as u64 + 2);
        WireWidths { n, big_n, id, position, level, hash: 8 * id, count: bits_for(big_n) }
    }

    /// `⌈log₂N⌉`, the unit of the per-message bit caps.
    pub fn log_big_n(&self) -> u32 {
        self.id
    }
}

/// Message types across both protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    ElectNotify,
    StatusReport,
    CommitteeResponse,
    Elect,
    IdAnnounce,
    ValInit,
    ValEcho,
    DiffReport,
    ConsensusMsg,
    New,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        MessageKind::ElectNotify,
        MessageKind::StatusReport,
        MessageKind::CommitteeResponse,
        MessageKind::Elect,
        MessageKind::IdAnnounce,
        MessageKind::ValInit,
        MessageKind::ValEcho,
        MessageKind::DiffReport,
        MessageKind::ConsensusMsg,
        MessageKind::New,
    ];

    pub const fn tag(self) -> u8 {
        match self {
            MessageKind::ElectNotify => 1,
            MessageKind::StatusReport => 2,
            MessageKind::CommitteeResponse => 3,
            MessageKind::Elect => 4,
            MessageKind::IdAnnounce => 5,
            MessageKind::ValInit => 6,
            MessageKind::ValEcho => 7,
            MessageKind::DiffReport => 8,
            MessageKind::ConsensusMsg => 9,
            MessageKind::New => 10,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        MessageKind::ALL.iter().copied().find(|k| k.tag() == tag)
    }

    pub const fn index(self) -> usize {
        self.tag() as usize - 1
    }

    /// Constant `c` of the cap `bits ≤ c·⌈log₂N⌉`, valid for every `4 ≤ n ≤ N`.
    pub const fn cap_constant(self) -> u32 {
        match self {
            MessageKind::ElectNotify | MessageKind::Elect | MessageKind::IdAnnounce => 5,
            MessageKind::StatusReport | MessageKind::CommitteeResponse => 10,
            MessageKind::ValInit | MessageKind::ValEcho => 12,
            MessageKind::DiffReport | MessageKind::ConsensusMsg => 3,
            MessageKind::New => 4,
        }
    }

    pub fn cap_bits(self, w: &WireWidths) -> u32 {
        self.cap_constant() * w.log_big_n()
    }

    /// Exact encoded length, tag included.
    pub fn bit_len(self, w: &WireWidths) -> u32 {
        TAG_BITS
            + match self {
                MessageKind::ElectNotify | MessageKind::Elect | MessageKind::IdAnnounce => w.id,
                MessageKind::StatusReport | MessageKind::CommitteeResponse => {
                    w.id + 2 * w.position + 2 * w.level
                }
                MessageKind::ValInit | MessageKind::ValEcho => w.hash + w.count,
                MessageKind::DiffReport => 1,
                MessageKind::ConsensusMsg => 2,
                MessageKind::New => 1 + w.position,
            }
    }
}

/// Destination for encoded fields.
pub trait BitSink {
    fn put(&mut self, value: u64, width: u32);
}

/// MSB-first bit string.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len);
        (self.words[i / 64] >> (63 - i % 64)) & 1 == 1
    }

    pub fn push_bit(&mut self, b: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        if b {
            let i = self.len;
            self.words[i / 64] |= 1 << (63 - i % 64);
        }
        self.len += 1;
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, pos: 0 }
    }
}

impl BitSink for BitString {
    fn put(&mut self, value: u64, width: u32) {
        for i in (0..width).rev() {
            self.push_bit((value >> i) & 1 == 1);
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Counts bits without storing them.
#[derive(Default)]
pub struct BitCounter(pub u64);

impl BitSink for BitCounter {
    fn put(&mut self, _value: u64, width: u32) {
        self.0 += width as u64;
    }
}

pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl BitReader<'_> {
    pub fn take(&mut self, width: u32) -> Result<u64, DecodeError> {
        if self.pos + width as usize > self.bits.len {
            return Err(DecodeError::Truncated { offset: self.pos, wanted: width });
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.bits.bit(self.pos) as u64;
            self.pos += 1;
        }
        Ok(v)
    }

    pub fn remaining(&self) -> usize {
        self.bits.len - self.pos
    }
}

/// Writes `value` at `width` bits, rejecting overflow.
pub fn put_field<S: BitSink>(
    sink: &mut S,
    field: &'static str,
    value: u64,
    width: u32,
) -> Result<(), EncodeError> {
    if width < 64 && value >> width != 0 {
        return Err(EncodeError::FieldOverflow { field, value, width });
    }
    sink.put(value, width);
    Ok(())
}

/// Writes a value from `[1, max]` as `value - 1`.
pub fn put_one_based<S: BitSink>(
    sink: &mut S,
    field: &'static str,
    value: u64,
    max: u64,
    width: u32,
) -> Result<(), EncodeError> {
    if value == 0 || value > max {
        return Err(EncodeError::OutOfRange { field, value });
    }
    put_field(sink, field, value - 1, width)
}

pub fn take_one_based(
    r: &mut BitReader<'_>,
    field: &'static str,
    max: u64,
    width: u32,
) -> Result<u64, DecodeError> {
    let v = r.take(width)? + 1;
    if v > max {
        return Err(DecodeError::Invalid { field, value: v });
    }
    Ok(v)
}

/// A protocol message with a canonical encoding.
pub trait WireMessage: Clone + fmt::Debug {
    fn kind(&self) -> MessageKind;

    /// Writes every field after the tag.
    fn write_fields<S: BitSink>(&self, w: &WireWidths, sink: &mut S) -> Result<(), EncodeError>;

    fn read_fields(kind: MessageKind, w: &WireWidths, r: &mut BitReader<'_>) -> Result<Self, DecodeError>;

    /// Identity the payload claims to originate from, checked against the
    /// authenticated sender by the engine.
    fn claimed_origin(&self) -> Option<u32> {
        None
    }
}

pub fn encode<M: WireMessage>(msg: &M, w: &WireWidths) -> Result<BitString, EncodeError> {
    let mut out = BitString::new();
    out.put(msg.kind().tag() as u64, TAG_BITS);
    msg.write_fields(w, &mut out)?;
    debug_assert_eq!(out.len() as u32, msg.kind().bit_len(w));
    Ok(out)
}

/// Checks that every field fits and returns the encoded length.
pub fn validate<M: WireMessage>(msg: &M, w: &WireWidths) -> Result<u32, EncodeError> {
    let mut c = BitCounter(TAG_BITS as u64);
    msg.write_fields(w, &mut c)?;
    Ok(c.0 as u32)
}

pub fn decode<M: WireMessage>(bits: &BitString, w: &WireWidths) -> Result<M, DecodeError> {
    let mut r = bits.reader();
    let tag = r.take(TAG_BITS)? as u8;
    let kind = MessageKind::from_tag(tag).ok_or(DecodeError::UnknownTag(tag))?;
    let msg = M::read_fields(kind, w, &mut r)?;
    if r.remaining() != 0 {
        return Err(DecodeError::Trailing(r.remaining()));
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_width_at_2_16_and_2_10() {
        let w = WireWidths::new(1 << 10, 1 << 16);
        assert_eq!(w.id, 16);
        assert_eq!(w.position, 10);
        // 3*10+2 = 32 values -> 5 bits
        assert_eq!(w.level, 5);
        assert_eq!(MessageKind::StatusReport.bit_len(&w), 4 + 16 + 10 + 10 + 5 + 5);
    }

    #[test]
    fn caps_hold_for_small_and_large_instances() {
        for (n, big_n) in [(4u32, 4u64), (4, 5), (5, 5), (8, 8), (32, 5120), (1024, 1 << 20), (1 << 20, (1 << 31) - 1)] {
            let w = WireWidths::new(n, big_n);
            for k in MessageKind::ALL {
                assert!(k.bit_len(&w) <= k.cap_bits(&w), "{k:?} at n={n} N={big_n}");
            }
        }
    }

    #[test]
    fn bit_string_round_trip() {
        let mut b = BitString::new();
        b.put(0b1011, 4);
        b.put(u64::MAX, 64);
        b.put(3, 7);
        let mut r = b.reader();
        assert_eq!(r.take(4).unwrap(), 0b1011);
        assert_eq!(r.take(64).unwrap(), u64::MAX);
        assert_eq!(r.take(7).unwrap(), 3);
        assert!(r.take(1).is_err());
    }

    #[test]
    fn overflow_detected() {
        let mut c = BitCounter::default();
        assert!(put_field(&mut c, "x", 32, 5).is_err());
        assert!(put_field(&mut c, "x", 31, 5).is_ok());
        assert!(put_one_based(&mut c, "id", 0, 10, 4).is_err());
        assert!(put_one_based(&mut c, "id", 11, 10, 4).is_err());
    }
}
