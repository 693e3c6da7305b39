//! Crash-resilient renaming by committee-driven interval halving.
//!
//! Each phase has three rounds: elected nodes announce themselves, every node
//! reports `⟨id, I, d, p⟩` to the committee members it heard, and members
//! answer with a halved interval for the reports at the minimum depth.

mod protocol;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::interval::{Interval, IntervalError};
use crate::math::{bernoulli_from_word, ceil_log2, clamp_probability, log2};
use crate::net::wire::{
    put_field, put_one_based, take_one_based, BitReader, BitSink, DecodeError, EncodeError,
};
use crate::net::{MessageKind, NodeId, WireMessage, WireWidths};

pub use protocol::{run_crash_protocol, CrashRun, CrashRunOptions, PhaseSummary};

/// Election constant of the committee lottery.
pub const DEFAULT_ELECTION_CONSTANT: f64 = 256.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrashError {
    #[error("id {0} is not a member of the set")]
    NotMember(u32),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrashParams {
    pub n: u32,
    pub big_n: u64,
    pub election_constant: f64,
    /// Decided nodes stop sending status reports.
    pub early_exit: bool,
}

impl CrashParams {
    pub fn new(n: u32, big_n: u64) -> Self {
        CrashParams { n, big_n, election_constant: DEFAULT_ELECTION_CONSTANT, early_exit: false }
    }

    /// `3⌈log₂n⌉`
    pub fn phases(&self) -> u32 {
        3 * ceil_log2(self.n as u64)
    }

    /// Engine rounds after initialisation.
    pub fn protocol_rounds(&self) -> u64 {
        3 * self.phases() as u64
    }

    /// Unclamped `C·2^p·log₂n / n`.
    pub fn raw_election_probability(&self, exponent: u32) -> f64 {
        let n = self.n as f64;
        self.election_constant * libm::pow(2.0, exponent as f64) * log2(n) / n
    }

    /// `min(1, C·2^p·log₂n / n)`
    pub fn election_probability(&self, exponent: u32) -> f64 {
        clamp_probability(self.raw_election_probability(exponent))
    }

    pub fn widths(&self) -> WireWidths {
        WireWidths::new(self.n, self.big_n)
    }
}

/// Per-node protocol state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrashNodeState {
    pub id: NodeId,
    pub interval: Interval,
    pub depth: u32,
    pub exponent: u32,
    pub elected: bool,
    pub crashed: bool,
}

impl CrashNodeState {
    pub fn fresh(id: NodeId, n: u32) -> Self {
        CrashNodeState {
            id,
            interval: Interval::root(n),
            depth: 0,
            exponent: 0,
            elected: false,
            crashed: false,
        }
    }

    pub fn decided(&self) -> bool {
        self.interval.is_singleton()
    }

    pub fn report(&self) -> StatusReport {
        StatusReport { id: self.id, interval: self.interval, depth: self.depth, exponent: self.exponent }
    }
}

/// Initial state; elected with probability `min(1, C·log₂n/n)`.
pub fn init_node<R: RngCore>(id: NodeId, params: &CrashParams, rng: &mut R) -> CrashNodeState {
    let mut s = CrashNodeState::fresh(id, params.n);
    s.elected = bernoulli_from_word(rng.next_u64(), params.election_probability(0));
    s
}

/// `⟨id, I, d, p⟩` sent to committee members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatusReport {
    pub id: NodeId,
    pub interval: Interval,
    pub depth: u32,
    pub exponent: u32,
}

/// Committee answer addressed to node `id`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CommitteeResponse {
    pub id: NodeId,
    pub interval: Interval,
    pub depth: u32,
    pub exponent: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrashMsg {
    Notify { id: NodeId },
    Report(StatusReport),
    Response(CommitteeResponse),
}

fn put_quad<S: BitSink>(
    sink: &mut S,
    w: &WireWidths,
    id: NodeId,
    iv: Interval,
    depth: u32,
    exponent: u32,
) -> Result<(), EncodeError> {
    put_one_based(sink, "id", id.0 as u64, w.big_n, w.id)?;
    put_one_based(sink, "lo", iv.lo as u64, w.n as u64, w.position)?;
    put_one_based(sink, "hi", iv.hi as u64, w.n as u64, w.position)?;
    if iv.lo > iv.hi {
        return Err(EncodeError::OutOfRange { field: "interval", value: iv.lo as u64 });
    }
    put_field(sink, "depth", depth as u64, w.level)?;
    put_field(sink, "exponent", exponent as u64, w.level)
}

fn take_quad(w: &WireWidths, r: &mut BitReader<'_>) -> Result<(NodeId, Interval, u32, u32), DecodeError> {
    let id = NodeId(take_one_based(r, "id", w.big_n, w.id)? as u32);
    let lo = take_one_based(r, "lo", w.n as u64, w.position)? as u32;
    let hi = take_one_based(r, "hi", w.n as u64, w.position)? as u32;
    let iv = Interval::new(lo, hi).map_err(|_| DecodeError::Invalid { field: "interval", value: lo as u64 })?;
    let depth = r.take(w.level)? as u32;
    let exponent = r.take(w.level)? as u32;
    Ok((id, iv, depth, exponent))
}

impl WireMessage for CrashMsg {
    fn kind(&self) -> MessageKind {
        match self {
            CrashMsg::Notify { .. } => MessageKind::ElectNotify,
            CrashMsg::Report(_) => MessageKind::StatusReport,
            CrashMsg::Response(_) => MessageKind::CommitteeResponse,
        }
    }

    fn write_fields<S: BitSink>(&self, w: &WireWidths, sink: &mut S) -> Result<(), EncodeError> {
        match self {
            CrashMsg::Notify { id } => put_one_based(sink, "id", id.0 as u64, w.big_n, w.id),
            CrashMsg::Report(r) => put_quad(sink, w, r.id, r.interval, r.depth, r.exponent),
            CrashMsg::Response(r) => put_quad(sink, w, r.id, r.interval, r.depth, r.exponent),
        }
    }

    fn read_fields(kind: MessageKind, w: &WireWidths, r: &mut BitReader<'_>) -> Result<Self, DecodeError> {
        match kind {
            MessageKind::ElectNotify => {
                Ok(CrashMsg::Notify { id: NodeId(take_one_based(r, "id", w.big_n, w.id)? as u32) })
            }
            MessageKind::StatusReport => {
                let (id, interval, depth, exponent) = take_quad(w, r)?;
                Ok(CrashMsg::Report(StatusReport { id, interval, depth, exponent }))
            }
            MessageKind::CommitteeResponse => {
                let (id, interval, depth, exponent) = take_quad(w, r)?;
                Ok(CrashMsg::Response(CommitteeResponse { id, interval, depth, exponent }))
            }
            other => Err(DecodeError::ForeignTag { found: other }),
        }
    }

    fn claimed_origin(&self) -> Option<u32> {
        match self {
            CrashMsg::Notify { id } => Some(id.0),
            CrashMsg::Report(r) => Some(r.id.0),
            CrashMsg::Response(_) => None,
        }
    }
}

/// 1-based position of `x` in ascending `set`.
pub fn rank(x: NodeId, set: &[NodeId]) -> Result<usize, CrashError> {
    let mut below = 0;
    let mut found = false;
    for &y in set {
        if y < x {
            below += 1;
        } else if y == x {
            found = true;
        }
    }
    if found {
        Ok(below + 1)
    } else {
        Err(CrashError::NotMember(x.0))
    }
}

pub type RankFn = fn(NodeId, &[NodeId]) -> Result<usize, CrashError>;

/// Responses of one committee member to its report set `reports`, in report order.
///
/// `p_self` is the member's exponent, already raised to the maximum in `reports`.
pub fn committee_action(reports: &[StatusReport], p_self: u32) -> Vec<CommitteeResponse> {
    committee_action_with(reports, p_self, rank)
}

/// [`committee_action`] with a substitutable rank function.
pub fn committee_action_with(reports: &[StatusReport], p_self: u32, rank_fn: RankFn) -> Vec<CommitteeResponse> {
    let Some(d_min) = reports.iter().map(|r| r.depth).min() else {
        return Vec::new();
    };

    // ids per reported interval, ascending
    let mut by_interval: BTreeMap<Interval, Vec<NodeId>> = BTreeMap::new();
    for r in reports {
        by_interval.entry(r.interval).or_default().push(r.id);
    }
    for ids in by_interval.values_mut() {
        ids.sort_unstable();
    }
    // reported intervals sorted by lo, to count subsets of a query range
    let mut spans: Vec<(u32, u32)> = reports.iter().map(|r| (r.interval.lo, r.interval.hi)).collect();
    spans.sort_unstable();
    let count_within = |q: Interval| -> usize {
        let start = spans.partition_point(|s| s.0 < q.lo);
        spans[start..].iter().take_while(|s| s.0 <= q.hi).filter(|s| s.1 <= q.hi).count()
    };
    let mut bot_counts: BTreeMap<Interval, usize> = BTreeMap::new();

    reports
        .iter()
        .map(|w| {
            if w.depth != d_min || w.interval.is_singleton() {
                // deeper reports, and decided nodes at the minimum depth, keep (I, d)
                return CommitteeResponse { id: w.id, interval: w.interval, depth: w.depth, exponent: p_self };
            }
            let bot = w.interval.bot().expect("non-singleton");
            let top = w.interval.top().expect("non-singleton");
            let b = *bot_counts.entry(w.interval).or_insert_with(|| count_within(bot));
            let ids = &by_interval[&w.interval];
            let rk = rank_fn(w.id, ids).unwrap_or(usize::MAX / 2);
            let interval = if b + rk <= bot.len() as usize { bot } else { top };
            CommitteeResponse { id: w.id, interval, depth: w.depth + 1, exponent: p_self }
        })
        .collect()
}

/// Result of the deterministic part of the node action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeActionPlan {
    /// Probability of the election trial, when one is due.
    pub election_trial: Option<f64>,
}

/// Applies the node action to `state` except for the random election trial,
/// which is returned as a probability for the caller to realise.
pub fn plan_node_action(
    state: &mut CrashNodeState,
    responses: &[CommitteeResponse],
    params: &CrashParams,
) -> NodeActionPlan {
    if responses.is_empty() {
        state.exponent += 1;
        let q = params.election_probability(state.exponent);
        return NodeActionPlan { election_trial: (!state.elected).then_some(q) };
    }
    let first = responses
        .iter()
        .min_by(|a, b| {
            b.depth
                .cmp(&a.depth)
                .then(a.interval.lo.cmp(&b.interval.lo))
                .then(a.interval.hi.cmp(&b.interval.hi))
        })
        .expect("non-empty");
    if !state.interval.is_singleton() {
        state.depth = first.depth;
        state.interval = first.interval;
    }
    let p_hat = responses.iter().map(|r| r.exponent).max().expect("non-empty");
    if p_hat > state.exponent {
        state.exponent = p_hat;
        if !state.elected {
            return NodeActionPlan { election_trial: Some(params.election_probability(state.exponent)) };
        }
    }
    NodeActionPlan { election_trial: None }
}

/// Full node action, drawing the election trial from `rng`.
pub fn node_action<R: RngCore>(
    responses: &[CommitteeResponse],
    state: &CrashNodeState,
    params: &CrashParams,
    rng: &mut R,
) -> CrashNodeState {
    let mut next = *state;
    if let Some(q) = plan_node_action(&mut next, responses, params).election_trial {
        if bernoulli_from_word(rng.next_u64(), q) {
            next.elected = true;
        }
    }
    next
}
