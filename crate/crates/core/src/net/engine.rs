use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::group::NodeGroup;
use super::metrics::MetricCounters;
use super::transcript::{Event, EventLog, LogLevel};
use super::wire::{self, EncodeError, MessageKind, WireMessage, WireWidths};
use super::{NodeId, NodeIndex};

/// Which sends contribute to `messages_total`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountPolicy {
    /// Every point-to-point send, including those lost to a mid-send crash.
    #[default]
    Sent,
    /// Only point-to-point sends that reached their receiver.
    Delivered,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("node {0} is crashed and cannot send")]
    CrashedSender(NodeIndex),
    #[error("node index {0} out of range")]
    UnknownNode(NodeIndex),
    #[error("{kind:?} message of {bits} bits exceeds its cap of {cap} bits")]
    BitBudget { kind: MessageKind, bits: u32, cap: u32 },
    #[error("encoding failed: {0}")]
    Encode(#[from] EncodeError),
    #[error("crash budget {budget} exceeded")]
    BudgetExceeded { budget: usize },
    #[error("no live node remains")]
    AllCrashed,
    #[error("delivered subset given for node {0} which does not crash this round")]
    StraySubset(NodeIndex),
    #[error("table message from node {0} mixes message kinds")]
    MixedTable(NodeIndex),
}

/// Crash choices for one round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashDecision {
    pub crash_now: Vec<NodeIndex>,
    /// Receivers that still get the crashing node's sends of this round.
    /// Nodes missing from the map deliver nothing.
    pub delivered_subset: BTreeMap<NodeIndex, Vec<NodeIndex>>,
}

impl CrashDecision {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.crash_now.is_empty()
    }

    pub fn crash(&mut self, node: NodeIndex, delivered: Vec<NodeIndex>) {
        if !self.crash_now.contains(&node) {
            self.crash_now.push(node);
        }
        self.delivered_subset.insert(node, delivered);
    }
}

/// Receivers and contents of one send.
#[derive(Clone, Debug)]
pub enum Payload<M> {
    Unicast { to: NodeIndex, msg: M },
    Multicast { to: Rc<NodeGroup>, msg: M },
    Broadcast { msg: M },
    /// Personalised messages: receiver `i` gets `entries[i]`.
    Table { entries: Rc<Vec<Option<M>>>, fanout: usize },
}

/// One authenticated send. `sender` is set by the engine.
#[derive(Clone, Debug)]
pub struct Envelope<M> {
    pub sender: NodeIndex,
    pub payload: Payload<M>,
    pub kind: MessageKind,
    /// Encoded length of each point-to-point copy.
    pub bits: u32,
}

impl<M> Envelope<M> {
    pub fn fanout(&self, n: usize) -> usize {
        match &self.payload {
            Payload::Unicast { .. } => 1,
            Payload::Multicast { to, .. } => to.len(),
            Payload::Broadcast { .. } => n,
            Payload::Table { fanout, .. } => *fanout,
        }
    }

    /// The message `r` gets from this send, ignoring crashes.
    pub fn message_for(&self, r: NodeIndex) -> Option<&M> {
        match &self.payload {
            Payload::Unicast { to, msg } => (*to == r).then_some(msg),
            Payload::Multicast { to, msg } => to.contains(r).then_some(msg),
            Payload::Broadcast { msg } => Some(msg),
            Payload::Table { entries, .. } => entries.get(r).and_then(|e| e.as_ref()),
        }
    }

    pub fn receivers(&self, n: usize) -> Vec<NodeIndex> {
        (0..n).filter(|r| self.message_for(*r).is_some()).collect()
    }
}

/// A send that reached at least one receiver.
#[derive(Clone, Debug)]
pub struct Delivered<M> {
    pub envelope: Envelope<M>,
    /// Present when the sender crashed mid-send: only these receivers got it.
    pub mask: Option<Rc<NodeGroup>>,
}

impl<M> Delivered<M> {
    pub fn message_for(&self, r: NodeIndex) -> Option<&M> {
        match &self.mask {
            Some(m) if !m.contains(r) => None,
            _ => self.envelope.message_for(r),
        }
    }

    pub fn sender(&self) -> NodeIndex {
        self.envelope.sender
    }
}

/// Everything delivered at the end of one round.
#[derive(Clone, Debug)]
pub struct Delivery<M> {
    pub round: u64,
    items: Vec<Delivered<M>>,
    /// Indices of non-unicast items.
    wide: Vec<u32>,
    uni_offsets: Vec<u32>,
    uni_items: Vec<u32>,
}

impl<M> Delivery<M> {
    fn build(round: u64, n: usize, items: Vec<Delivered<M>>) -> Self {
        let mut counts = vec![0u32; n + 1];
        let mut wide = Vec::new();
        for (i, d) in items.iter().enumerate() {
            match &d.envelope.payload {
                Payload::Unicast { to, .. } => counts[*to + 1] += 1,
                _ => wide.push(i as u32),
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut uni_items = vec![0u32; counts[n] as usize];
        for (i, d) in items.iter().enumerate() {
            if let Payload::Unicast { to, .. } = &d.envelope.payload {
                uni_items[fill[*to] as usize] = i as u32;
                fill[*to] += 1;
            }
        }
        Delivery { round, items, wide, uni_offsets: counts, uni_items }
    }

    pub fn items(&self) -> &[Delivered<M>] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Every `(sender, message)` delivered to `r`, in send order within each
    /// of the two classes (multi-receiver sends first, then unicasts).
    pub fn inbox(&self, r: NodeIndex) -> impl Iterator<Item = (NodeIndex, &M)> + '_ {
        let wide = self.wide.iter().filter_map(move |&i| {
            let d = &self.items[i as usize];
            d.message_for(r).map(|m| (d.sender(), m))
        });
        let (a, b) = if r + 1 < self.uni_offsets.len() {
            (self.uni_offsets[r] as usize, self.uni_offsets[r + 1] as usize)
        } else {
            (0, 0)
        };
        let uni = self.uni_items[a..b].iter().filter_map(move |&i| {
            let d = &self.items[i as usize];
            d.message_for(r).map(|m| (d.sender(), m))
        });
        wide.chain(uni)
    }

    /// Unicasts delivered to `r`.
    pub fn unicasts_to(&self, r: NodeIndex) -> impl Iterator<Item = (NodeIndex, &M)> + '_ {
        let (a, b) = (self.uni_offsets[r] as usize, self.uni_offsets[r + 1] as usize);
        self.uni_items[a..b].iter().filter_map(move |&i| {
            let d = &self.items[i as usize];
            d.message_for(r).map(|m| (d.sender(), m))
        })
    }

    /// Multi-receiver sends, for callers that tally by receiver group.
    pub fn wide_items(&self) -> impl Iterator<Item = &Delivered<M>> + '_ {
        self.wide.iter().map(move |&i| &self.items[i as usize])
    }
}

/// Round engine over a complete network of `n` nodes.
pub struct Network<M: WireMessage> {
    ids: Vec<NodeId>,
    widths: WireWidths,
    policy: CountPolicy,
    round: u64,
    crashed: Vec<bool>,
    crashed_count: usize,
    crash_budget: Option<usize>,
    pending: Vec<Envelope<M>>,
    metrics: MetricCounters,
    kind_counts: [u64; 16],
    log: EventLog,
    rejected: u64,
}

impl<M: WireMessage> Network<M> {
    pub fn new(ids: Vec<NodeId>, widths: WireWidths, policy: CountPolicy, level: LogLevel) -> Self {
        let n = ids.len();
        Network {
            ids,
            widths,
            policy,
            round: 0,
            crashed: vec![false; n],
            crashed_count: 0,
            crash_budget: None,
            pending: Vec::new(),
            metrics: MetricCounters { count_policy: policy, ..Default::default() },
            kind_counts: [0; 16],
            log: EventLog::new(level),
            rejected: 0,
        }
    }

    pub fn with_crash_budget(mut self, budget: usize) -> Self {
        self.crash_budget = Some(budget);
        self
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn widths(&self) -> &WireWidths {
        &self.widths
    }

    /// Number of completed rounds; the next `step_round` delivers round `round() + 1`.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_crashed(&self, i: NodeIndex) -> bool {
        self.crashed[i]
    }

    pub fn crashed(&self) -> &[bool] {
        &self.crashed
    }

    pub fn crashed_count(&self) -> usize {
        self.crashed_count
    }

    pub fn pending(&self) -> &[Envelope<M>] {
        &self.pending
    }

    pub fn metrics(&self) -> &MetricCounters {
        &self.metrics
    }

    pub fn metrics_mut(&mut self) -> &mut MetricCounters {
        &mut self.metrics
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut EventLog {
        &mut self.log
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    fn check_sender(&self, from: NodeIndex) -> Result<(), SimError> {
        if from >= self.n() {
            return Err(SimError::UnknownNode(from));
        }
        if self.crashed[from] {
            return Err(SimError::CrashedSender(from));
        }
        Ok(())
    }

    fn check_bits(&self, msg: &M) -> Result<u32, SimError> {
        let bits = wire::validate(msg, &self.widths)?;
        let kind = msg.kind();
        let cap = kind.cap_bits(&self.widths);
        if bits > cap {
            return Err(SimError::BitBudget { kind, bits, cap });
        }
        Ok(bits)
    }

    /// Drops payloads that claim an origin other than the authenticated sender.
    fn authentic(&mut self, from: NodeIndex, msg: &M) -> bool {
        match msg.claimed_origin() {
            Some(claimed) if claimed != self.ids[from].0 => {
                self.rejected += 1;
                let round = self.round + 1;
                self.log.push(round, Event::Rejected { sender: self.ids[from], kind: msg.kind(), claimed });
                false
            }
            _ => true,
        }
    }

    fn enqueue(&mut self, from: NodeIndex, payload: Payload<M>, kind: MessageKind, bits: u32) {
        self.pending.push(Envelope { sender: from, payload, kind, bits });
    }

    pub fn send(&mut self, from: NodeIndex, to: NodeIndex, msg: M) -> Result<(), SimError> {
        self.check_sender(from)?;
        if to >= self.n() {
            return Err(SimError::UnknownNode(to));
        }
        let bits = self.check_bits(&msg)?;
        if self.authentic(from, &msg) {
            let kind = msg.kind();
            self.enqueue(from, Payload::Unicast { to, msg }, kind, bits);
        }
        Ok(())
    }

    /// Sends `msg` over all `n` links, the self-link included.
    pub fn broadcast(&mut self, from: NodeIndex, msg: M) -> Result<(), SimError> {
        self.check_sender(from)?;
        let bits = self.check_bits(&msg)?;
        if self.authentic(from, &msg) {
            let kind = msg.kind();
            self.enqueue(from, Payload::Broadcast { msg }, kind, bits);
        }
        Ok(())
    }

    pub fn multicast(&mut self, from: NodeIndex, to: Rc<NodeGroup>, msg: M) -> Result<(), SimError> {
        self.check_sender(from)?;
        if to.capacity() != self.n() {
            return Err(SimError::UnknownNode(to.capacity()));
        }
        let bits = self.check_bits(&msg)?;
        if to.is_empty() {
            return Ok(());
        }
        if self.authentic(from, &msg) {
            let kind = msg.kind();
            self.enqueue(from, Payload::Multicast { to, msg }, kind, bits);
        }
        Ok(())
    }

    /// Sends `entries[i]` to each node `i` with an entry. All entries must share a kind.
    pub fn send_table(&mut self, from: NodeIndex, entries: Rc<Vec<Option<M>>>) -> Result<(), SimError> {
        self.check_sender(from)?;
        if entries.len() != self.n() {
            return Err(SimError::UnknownNode(entries.len()));
        }
        let mut kind = None;
        let mut bits = 0;
        let mut fanout = 0;
        for m in entries.iter().flatten() {
            match kind {
                None => {
                    kind = Some(m.kind());
                    bits = self.check_bits(m)?;
                }
                Some(k) if k != m.kind() => return Err(SimError::MixedTable(from)),
                Some(_) => {
                    self.check_bits(m)?;
                }
            }
            fanout += 1;
        }
        if let Some(kind) = kind {
            self.enqueue(from, Payload::Table { entries, fanout }, kind, bits);
        }
        Ok(())
    }

    /// Closes the current round: applies `decision`, delivers every pending
    /// send and updates the counters.
    pub fn step_round(&mut self, decision: &CrashDecision) -> Result<Delivery<M>, SimError> {
        let n = self.n();
        self.round += 1;
        let round = self.round;

        for key in decision.delivered_subset.keys() {
            if !decision.crash_now.contains(key) {
                return Err(SimError::StraySubset(*key));
            }
        }
        let mut masks: BTreeMap<NodeIndex, Rc<NodeGroup>> = BTreeMap::new();
        for &v in &decision.crash_now {
            if v >= n {
                return Err(SimError::UnknownNode(v));
            }
            if self.crashed[v] {
                continue;
            }
            self.crashed[v] = true;
            self.crashed_count += 1;
            let subset = decision.delivered_subset.get(&v).map(|s| s.as_slice()).unwrap_or(&[]);
            for &r in subset {
                if r >= n {
                    return Err(SimError::UnknownNode(r));
                }
            }
            masks.insert(v, Rc::new(NodeGroup::from_members(n, subset.iter().copied())));
        }
        if let Some(b) = self.crash_budget {
            if self.crashed_count > b {
                return Err(SimError::BudgetExceeded { budget: b });
            }
        }
        if self.crashed_count >= n {
            return Err(SimError::AllCrashed);
        }

        let pending = core::mem::take(&mut self.pending);
        let mut items = Vec::with_capacity(pending.len());
        let mut round_messages = 0u64;
        for env in pending {
            let fanout = env.fanout(n) as u64;
            let mask = masks.get(&env.sender).cloned();
            let delivered = match &mask {
                None => fanout,
                Some(m) => m.iter().filter(|r| env.message_for(*r).is_some()).count() as u64,
            };
            let counted = match self.policy {
                CountPolicy::Sent => fanout,
                CountPolicy::Delivered => delivered,
            };
            round_messages += counted;
            self.metrics.bits_total += counted * env.bits as u64;
            self.metrics.messages_delivered += delivered;
            self.metrics.messages_lost += fanout - delivered;
            self.kind_counts[env.kind.index()] += counted;
            if self.log.enabled(LogLevel::Trace) {
                self.log.push(
                    round,
                    Event::Envelope {
                        sender: self.ids[env.sender],
                        kind: env.kind,
                        fanout: fanout as u32,
                        delivered: delivered as u32,
                        bits: env.bits,
                    },
                );
            }
            if delivered > 0 {
                items.push(Delivered { envelope: env, mask });
            }
        }
        for (&v, m) in &masks {
            self.log.push(round, Event::Crash { node: self.ids[v], delivered_to: m.len() as u32 });
        }

        self.metrics.messages_total += round_messages;
        self.metrics.messages_per_round.push(round_messages);
        self.metrics.rounds_total = round;
        for k in MessageKind::ALL {
            let c = self.kind_counts[k.index()];
            if c > 0 {
                self.metrics.messages_by_kind.insert(k, c);
            }
        }
        Ok(Delivery::build(round, n, items))
    }

    /// Closes a round in which no node crashes.
    pub fn step(&mut self) -> Result<Delivery<M>, SimError> {
        self.step_round(&CrashDecision::none())
    }

    pub fn into_parts(self) -> (MetricCounters, EventLog) {
        (self.metrics, self.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::wire::{put_one_based, take_one_based, BitReader, BitSink, DecodeError};

    #[derive(Clone, Debug, PartialEq)]
    struct Ping(u32);

    impl WireMessage for Ping {
        fn kind(&self) -> MessageKind {
            MessageKind::IdAnnounce
        }
        fn write_fields<S: BitSink>(&self, w: &WireWidths, sink: &mut S) -> Result<(), EncodeError> {
            put_one_based(sink, "id", self.0 as u64, w.big_n, w.id)
        }
        fn read_fields(_: MessageKind, w: &WireWidths, r: &mut BitReader<'_>) -> Result<Self, DecodeError> {
            Ok(Ping(take_one_based(r, "id", w.big_n, w.id)? as u32))
        }
        fn claimed_origin(&self) -> Option<u32> {
            Some(self.0)
        }
    }

    fn net(n: u32) -> Network<Ping> {
        let ids = (1..=n).map(NodeId).collect();
        Network::new(ids, WireWidths::new(n, n as u64), CountPolicy::Sent, LogLevel::Trace)
    }

    #[test]
    fn mid_send_subset_delivery() {
        let mut net = net(4);
        net.multicast(0, Rc::new(NodeGroup::from_members(4, [1, 2, 3])), Ping(1)).unwrap();
        let mut d = CrashDecision::none();
        d.crash(0, vec![1]);
        let del = net.step_round(&d).unwrap();
        assert_eq!(del.inbox(1).count(), 1);
        assert_eq!(del.inbox(2).count(), 0);
        assert_eq!(del.inbox(3).count(), 0);
        assert_eq!(net.metrics().messages_total, 3);
        assert_eq!(net.metrics().messages_lost, 2);
        assert!(net.is_crashed(0));
        assert!(matches!(net.send(0, 1, Ping(1)), Err(SimError::CrashedSender(0))));
    }

    #[test]
    fn delivered_policy_counts_only_arrivals() {
        let ids = (1..=4).map(NodeId).collect();
        let mut net: Network<Ping> =
            Network::new(ids, WireWidths::new(4, 4), CountPolicy::Delivered, LogLevel::Off);
        net.broadcast(0, Ping(1)).unwrap();
        let mut d = CrashDecision::none();
        d.crash(0, vec![2]);
        net.step_round(&d).unwrap();
        assert_eq!(net.metrics().messages_total, 1);
        assert!(net.metrics().conserved());
    }

    #[test]
    fn empty_round() {
        let mut net = net(4);
        let del = net.step().unwrap();
        assert!(del.is_empty());
        assert_eq!(net.metrics().messages_per_round, vec![0]);
    }

    #[test]
    fn full_broadcast_sixteen_envelopes() {
        let mut net = net(4);
        for v in 0..4 {
            net.broadcast(v, Ping(v as u32 + 1)).unwrap();
        }
        let del = net.step().unwrap();
        let total: usize = (0..4).map(|r| del.inbox(r).count()).sum();
        assert_eq!(total, 16);
        assert_eq!(net.metrics().messages_total, 16);
        assert_eq!(net.metrics().bits_total, 16 * (4 + 2));
        assert!(net.metrics().conserved());
    }

    #[test]
    fn forged_origin_rejected() {
        let mut net = net(4);
        net.send(0, 1, Ping(3)).unwrap();
        let del = net.step().unwrap();
        assert_eq!(del.inbox(1).count(), 0);
        assert_eq!(net.rejected(), 1);
        assert_eq!(net.metrics().messages_total, 0);
    }

    #[test]
    fn budget_enforced() {
        let mut net = net(4).with_crash_budget(1);
        let mut d = CrashDecision::none();
        d.crash(0, vec![]);
        d.crash(1, vec![]);
        assert!(matches!(net.step_round(&d), Err(SimError::BudgetExceeded { .. })));
    }

    #[test]
    fn stray_subset_rejected() {
        let mut net = net(4);
        let mut d = CrashDecision::none();
        d.delivered_subset.insert(2, vec![1]);
        assert!(matches!(net.step_round(&d), Err(SimError::StraySubset(2))));
    }

    #[test]
    fn table_delivers_personal_entries() {
        let mut net = net(4);
        let entries = Rc::new(vec![Some(Ping(1)), None, Some(Ping(1)), None]);
        net.send_table(0, entries).unwrap();
        let del = net.step().unwrap();
        assert_eq!(del.inbox(0).count(), 1);
        assert_eq!(del.inbox(1).count(), 0);
        assert_eq!(net.metrics().messages_total, 2);
    }
}
