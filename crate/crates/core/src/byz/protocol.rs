//! Round-by-round driver of the Byzantine protocol.
//!
//! Rounds: ELECT, ID, then the while loop (each member runs its own state
//! machine; correct members stay in lockstep as long as consensus agrees),
//! then one NEW round per member.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::consensus::{ConsensusNode, KingSeed, Vote};
use super::hash::SegmentHash;
use super::list::IdentityList;
use super::validator::{validator_echo, validator_output, Tally};
use super::{ByzMsg, ByzParams, Fingerprint};
use crate::adversary::byzantine::{ByzAdversary, ByzObservation, ByzOutbox};
use crate::interval::Interval;
use crate::monitor::{check_unique_strong, ByzMonitor, IterationSnapshot, MemberSnapshot, MonitorReport};
use crate::net::rng::{DrawKind, SharedRandomness};
use crate::net::{
    CountPolicy, Delivery, Event, EventLog, IterationOutcome, LogLevel, MessageKind, MetricCounters, Network,
    NodeGroup, NodeId, NodeIndex, NodeOutcome, Payload, SimError, WireMessage,
};

/// Consensus instances of one while-iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instance {
    Same,
    Diff,
    Bit,
}

impl Instance {
    fn key(self, iteration: u64) -> u64 {
        3 * iteration
            + match self {
                Instance::Same => 0,
                Instance::Diff => 1,
                Instance::Bit => 2,
            }
    }
}

/// Position in the public schedule. Every field can be read off the message
/// kinds a committee member receives, so handing it to the adversary leaks
/// nothing private.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Elect,
    Announce,
    ValInit { iteration: u64, segment: Interval },
    ValEcho { iteration: u64, segment: Interval },
    Consensus { iteration: u64, segment: Interval, instance: Instance, phase: u32, step: u8 },
    Diff { iteration: u64, segment: Interval },
    New,
    Idle,
}

#[derive(Clone, Debug)]
pub struct ByzRunOptions {
    pub seed: u64,
    pub budget: usize,
    pub count_policy: CountPolicy,
    pub log_level: LogLevel,
    /// Safety stop for runs whose members lost lockstep; `None` uses
    /// twice the iteration bound.
    pub max_iterations: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeStats {
    pub correct: u32,
    pub byzantine: u32,
    /// `c_g ≤ |G| ≤ ĉ_g` and `|B| < c_g/2`
    pub within_thresholds: bool,
}

/// Cause assigned to a failed trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    CommitteeTail,
    HashCollision,
    Unexplained,
}

pub struct ByzRun {
    pub outcome: Vec<NodeOutcome>,
    /// While-iterations of the slowest correct member.
    pub iterations: u64,
    pub committee: CommitteeStats,
    /// Iterations in which two correct members held different segments with equal fingerprints.
    pub collisions: u64,
    /// Correct nodes that got fewer than `c_g` NEW messages.
    pub timeouts: u32,
    pub success: bool,
    pub failure: Option<FailureCause>,
    pub f_actual: u32,
    pub monitors: MonitorReport,
    pub metrics: MetricCounters,
    pub log: EventLog,
}

#[derive(Clone, Debug)]
enum Work {
    Idle,
    Init { seg: Interval, fp: Fingerprint },
    Echo { seg: Interval, fp: Fingerprint, echo: Option<Fingerprint> },
    Same { seg: Interval, fp: Fingerprint, out: Fingerprint, cons: ConsensusNode },
    Diff { seg: Interval, fp: Fingerprint, out: Fingerprint, same: bool, diff: bool },
    DiffCons { seg: Interval, fp: Fingerprint, out: Fingerprint, same: bool, cons: ConsensusNode },
    Bit { seg: Interval, cons: ConsensusNode },
    NewPending,
    Finished,
}

impl Work {
    fn cons(&self) -> Option<(&ConsensusNode, Instance)> {
        match self {
            Work::Same { cons, .. } => Some((cons, Instance::Same)),
            Work::DiffCons { cons, .. } => Some((cons, Instance::Diff)),
            Work::Bit { cons, .. } => Some((cons, Instance::Bit)),
            _ => None,
        }
    }

    fn cons_mut(&mut self) -> Option<&mut ConsensusNode> {
        match self {
            Work::Same { cons, .. } | Work::DiffCons { cons, .. } | Work::Bit { cons, .. } => Some(cons),
            _ => None,
        }
    }

    fn expects(&self) -> Option<MessageKind> {
        match self {
            Work::Init { .. } => Some(MessageKind::ValInit),
            Work::Echo { .. } => Some(MessageKind::ValEcho),
            Work::Diff { .. } => Some(MessageKind::DiffReport),
            Work::Same { .. } | Work::DiffCons { .. } | Work::Bit { .. } => Some(MessageKind::ConsensusMsg),
            _ => None,
        }
    }
}

struct Member {
    node: NodeIndex,
    list: IdentityList,
    stack: Vec<Interval>,
    processed: Vec<Interval>,
    dirty: Vec<Interval>,
    iterations: u64,
    work: Work,
    /// View minus the common core `U`.
    extras: Vec<NodeIndex>,
    king: Option<NodeIndex>,
    /// Senders of the ID announcements this member received.
    announced: Vec<NodeIndex>,
}

impl Member {
    fn stage(&self) -> Stage {
        let iteration = self.iterations;
        match &self.work {
            Work::Init { seg, .. } => Stage::ValInit { iteration, segment: *seg },
            Work::Echo { seg, .. } => Stage::ValEcho { iteration, segment: *seg },
            Work::Diff { seg, .. } => Stage::Diff { iteration, segment: *seg },
            Work::Same { seg, cons, .. } | Work::DiffCons { seg, cons, .. } | Work::Bit { seg, cons } => {
                let (_, instance) = self.work.cons().expect("consensus work");
                Stage::Consensus { iteration, segment: *seg, instance, phase: cons.phase(), step: cons.step() }
            }
            Work::NewPending => Stage::New,
            Work::Idle | Work::Finished => Stage::Idle,
        }
    }

    fn snapshot(&self) -> MemberSnapshot<'_> {
        MemberSnapshot {
            node: self.node,
            stack: &self.stack,
            processed: &self.processed,
            dirty: &self.dirty,
            list: &self.list,
            iterations: self.iterations,
        }
    }

    /// NEW value for a node with original id `id`.
    fn new_value(&self, id: u32, n: u32) -> Option<u32> {
        if self.dirty.iter().any(|j| j.contains(id)) {
            return None;
        }
        let rank = self.list.rank_at_or_before(id);
        (1..=n).contains(&rank).then_some(rank)
    }
}

/// Per-round receive state shared across members.
#[derive(Default)]
struct Inbound {
    /// Item indices of each sender, in send order.
    by_sender: Vec<Vec<u32>>,
    senders: Vec<NodeIndex>,
    slow: Vec<NodeIndex>,
    votes: [u32; 3],
    diff_true: u32,
    init: Tally<Fingerprint>,
    echo: Tally<Fingerprint>,
}

impl Inbound {
    fn reset(&mut self, n: usize) {
        if self.by_sender.len() != n {
            self.by_sender = vec![Vec::new(); n];
        }
        for s in self.senders.drain(..) {
            self.by_sender[s].clear();
        }
        self.slow.clear();
        self.votes = [0; 3];
        self.diff_true = 0;
        self.init = Tally::new();
        self.echo = Tally::new();
    }

    fn add_common(&mut self, msg: &ByzMsg) {
        match msg {
            ByzMsg::Vote(v) => self.votes[v.code() as usize] += 1,
            ByzMsg::Diff(true) => self.diff_true += 1,
            ByzMsg::Init(f) => self.init.add(f),
            ByzMsg::Echo(f) => self.echo.add(f),
            _ => {}
        }
    }
}

/// King choice split into the part shared by every member (the common core
/// `U` sorted by priority) and each member's own view extras.
struct KingOrder {
    key: u64,
    phase: u32,
    /// Priority of every node, `u64::MAX` off the core.
    priority: Vec<u64>,
    order: Vec<NodeIndex>,
}

impl KingOrder {
    fn new(seed: KingSeed, key: u64, phase: u32, ids: &[NodeId], core: &[bool]) -> Self {
        let priority: Vec<u64> = ids.iter().map(|id| seed.priority(*id)).collect();
        let mut order: Vec<NodeIndex> = (0..ids.len()).filter(|u| core[*u]).collect();
        order.sort_unstable_by_key(|u| (priority[*u], ids[*u]));
        KingOrder { key, phase, priority, order }
    }

    /// Same result as `choose_king` over `core ∪ extras`.
    fn king(&self, ids: &[NodeId], extras: &[NodeIndex], used: &[NodeIndex]) -> Option<NodeIndex> {
        let rank = |u: NodeIndex| (self.priority[u], ids[u]);
        let from_core = self.order.iter().copied().find(|u| !used.contains(u));
        let bound = from_core.map(rank);
        let extra = extras
            .iter()
            .copied()
            .filter(|u| bound.is_none_or(|b| rank(*u) < b))
            .filter(|u| !used.contains(u))
            .min_by_key(|u| rank(*u));
        extra.or(from_core)
    }
}

struct Driver<'a> {
    params: &'a ByzParams,
    shared: SharedRandomness,
    net: Network<ByzMsg>,
    ids: Vec<NodeId>,
    byzantine: Vec<NodeIndex>,
    is_byz: Vec<bool>,
    adversary: &'a mut dyn ByzAdversary,
    report: MonitorReport,
    monitor: ByzMonitor,
    views: Vec<Option<Rc<NodeGroup>>>,
    members: Vec<Member>,
    member_group: NodeGroup,
    core: Vec<bool>,
    new_from: Vec<Vec<(NodeIndex, Option<u32>)>>,
    inbound: Inbound,
    last: Option<Delivery<ByzMsg>>,
    collisions: u64,
    king_cache: Option<KingOrder>,
}

impl Driver<'_> {
    fn n(&self) -> usize {
        self.ids.len()
    }

    fn stage(&self) -> Stage {
        self.members
            .iter()
            .map(Member::stage)
            .find(|s| *s != Stage::Idle)
            .unwrap_or(Stage::Idle)
    }

    fn step(&mut self, stage: Stage) -> Result<Delivery<ByzMsg>, SimError> {
        let obs = ByzObservation {
            round: self.net.round() + 1,
            stage,
            ids: &self.ids,
            byzantine: &self.byzantine,
            shared: &self.shared,
            params: self.params,
            last: self.last.as_ref(),
        };
        let mut out = ByzOutbox { net: &mut self.net, byzantine: &self.byzantine };
        self.adversary.act(&obs, &mut out)?;
        self.last = None;
        self.net.step()
    }

    fn elect(&mut self) -> Result<(), SimError> {
        let n = self.n();
        let mut lottery = vec![false; n];
        for (v, won) in lottery.iter_mut().enumerate() {
            *won = self.shared.lottery(DrawKind::CommitteeLottery, self.ids[v].0 as u64, self.params.p0);
        }
        for v in 0..n {
            if lottery[v] && !self.is_byz[v] {
                self.net.broadcast(v, ByzMsg::Elect { id: self.ids[v].0 })?;
            }
        }
        let d = self.step(Stage::Elect)?;
        let mut interned: BTreeMap<Vec<NodeIndex>, Rc<NodeGroup>> = BTreeMap::new();
        for r in 0..n {
            if self.is_byz[r] {
                continue;
            }
            let mut view: Vec<NodeIndex> = d
                .inbox(r)
                .filter(|(s, m)| matches!(m, ByzMsg::Elect { .. }) && lottery[*s])
                .map(|(s, _)| s)
                .collect();
            if lottery[r] {
                view.push(r);
            }
            view.sort_unstable();
            view.dedup();
            let g = interned
                .entry(view)
                .or_insert_with_key(|k| Rc::new(NodeGroup::from_members(n, k.iter().copied())))
                .clone();
            self.views[r] = Some(g);
        }
        let correct_members: Vec<NodeIndex> = (0..n).filter(|v| lottery[*v] && !self.is_byz[*v]).collect();
        let byz_members = self.byzantine.iter().filter(|b| lottery[**b]).count();
        self.member_group = NodeGroup::from_members(n, correct_members.iter().copied());
        let round = self.net.round();
        self.monitor.committee(round, &correct_members, byz_members as u32, &self.views, &mut self.report);
        self.net.log_mut().push(
            round,
            Event::CommitteeElected {
                size: (correct_members.len() + byz_members) as u32,
                correct: correct_members.len() as u32,
                byzantine: byz_members as u32,
            },
        );

        // U: members present in every correct member's view
        self.core = vec![true; n];
        for &m in &correct_members {
            let view = self.views[m].as_ref().expect("correct node has a view");
            for (u, c) in self.core.iter_mut().enumerate() {
                *c = *c && view.contains(u);
            }
        }
        if correct_members.is_empty() {
            self.core = vec![false; n];
        }
        for m in correct_members {
            let view = self.views[m].as_ref().expect("view");
            let extras = view.iter().filter(|u| !self.core[*u]).collect();
            self.members.push(Member {
                node: m,
                list: IdentityList::new(),
                stack: vec![Interval::root(self.params.big_n as u32)],
                processed: Vec::new(),
                dirty: Vec::new(),
                iterations: 0,
                work: Work::Idle,
                extras,
                king: None,
                announced: Vec::new(),
            });
        }
        self.last = Some(d);
        Ok(())
    }

    fn announce(&mut self) -> Result<(), SimError> {
        for v in 0..self.n() {
            if self.is_byz[v] {
                continue;
            }
            let view = self.views[v].clone().expect("view");
            self.net.multicast(v, view, ByzMsg::Id { id: self.ids[v].0 })?;
        }
        let d = self.step(Stage::Announce)?;
        for m in &mut self.members {
            let mut ids = Vec::new();
            for (s, msg) in d.inbox(m.node) {
                if let ByzMsg::Id { id } = msg {
                    ids.push(*id);
                    m.announced.push(s);
                }
            }
            m.announced.sort_unstable();
            m.announced.dedup();
            m.list = IdentityList::from_ids(ids);
        }
        self.last = Some(d);
        Ok(())
    }

    /// Pops the next segment of every idle member and computes its fingerprint.
    fn begin_iterations(&mut self) {
        let width = self.params.widths().hash;
        let phases = self.params.consensus_phases();
        // segment content -> fingerprint, per iteration index
        let mut cache: Vec<(u64, Interval, Vec<u32>, Fingerprint)> = Vec::new();
        let mut hashers: Vec<(u64, SegmentHash)> = Vec::new();
        for m in &mut self.members {
            if !matches!(m.work, Work::Idle) {
                continue;
            }
            let Some(seg) = m.stack.pop() else {
                m.work = Work::NewPending;
                continue;
            };
            if seg.is_singleton() {
                m.work = Work::Bit { seg, cons: ConsensusNode::new(m.list.get(seg.lo), phases) };
                continue;
            }
            let ones = m.list.segment(&seg);
            let it = m.iterations;
            let fp = match cache.iter().find(|(i, s, o, _)| *i == it && *s == seg && o.as_slice() == ones) {
                Some((_, _, _, fp)) => *fp,
                None => {
                    if !hashers.iter().any(|(i, _)| *i == it) {
                        hashers.push((it, SegmentHash::for_iteration(&self.shared, it, width)));
                    }
                    let h = &hashers.iter().find(|(i, _)| *i == it).expect("hasher").1;
                    let fp = Fingerprint { hash: h.hash_ones(seg.lo, ones), cnt: ones.len() as u32 };
                    if cache.iter().any(|(i, s, _, f)| *i == it && *s == seg && *f == fp) {
                        self.collisions += 1;
                    }
                    cache.push((it, seg, ones.to_vec(), fp));
                    fp
                }
            };
            m.work = Work::Init { seg, fp };
        }
    }

    fn kings(&mut self) {
        for mi in 0..self.members.len() {
            let m = &self.members[mi];
            let Some((cons, instance)) = m.work.cons() else { continue };
            if cons.step() != 3 {
                continue;
            }
            let key = instance.key(m.iterations);
            let phase = cons.phase();
            let fresh = !matches!(&self.king_cache, Some(c) if c.key == key && c.phase == phase);
            if fresh {
                self.king_cache = Some(KingOrder::new(KingSeed::draw(&self.shared, key, phase), key, phase, &self.ids, &self.core));
            }
            let king = self.king_cache.as_ref().expect("cached").king(&self.ids, &m.extras, cons.used());
            let m = &mut self.members[mi];
            m.king = king;
            m.work.cons_mut().expect("consensus").set_king(king);
        }
    }

    fn send(&mut self) -> Result<(), SimError> {
        let n = self.params.n;
        for m in &mut self.members {
            let view = self.views[m.node].clone().expect("view");
            let msg = match &m.work {
                Work::Init { fp, .. } => Some(ByzMsg::Init(*fp)),
                Work::Echo { echo, .. } => echo.map(ByzMsg::Echo),
                Work::Diff { diff, .. } => Some(ByzMsg::Diff(*diff)),
                Work::Same { cons, .. } | Work::DiffCons { cons, .. } | Work::Bit { cons, .. } => {
                    cons.vote().or_else(|| cons.king_vote(m.node)).map(ByzMsg::Vote)
                }
                Work::NewPending => {
                    let mut entries = vec![None; self.ids.len()];
                    for &u in &m.announced {
                        entries[u] = Some(ByzMsg::New(m.new_value(self.ids[u].0, n)));
                    }
                    self.net.send_table(m.node, Rc::new(entries))?;
                    None
                }
                Work::Idle | Work::Finished => None,
            };
            if let Some(msg) = msg {
                self.net.multicast(m.node, view, msg)?;
            }
        }
        Ok(())
    }

    fn classify(&mut self, d: &Delivery<ByzMsg>) {
        let n = self.n();
        let correct_members = self.member_group.len();
        self.inbound.reset(n);
        for (i, item) in d.items().iter().enumerate() {
            let s = item.sender();
            if self.inbound.by_sender[s].is_empty() {
                self.inbound.senders.push(s);
            }
            self.inbound.by_sender[s].push(i as u32);
        }
        let senders = core::mem::take(&mut self.inbound.senders);
        for &s in &senders {
            let items = &self.inbound.by_sender[s];
            let item = &d.items()[items[0] as usize];
            let covers = match &item.envelope.payload {
                Payload::Broadcast { .. } => true,
                Payload::Multicast { to, .. } => to.intersection_len(&self.member_group) == correct_members,
                _ => false,
            };
            if items.len() == 1 && item.mask.is_none() && covers && self.core[s] {
                let msg = match &item.envelope.payload {
                    Payload::Broadcast { msg } | Payload::Multicast { msg, .. } => *msg,
                    _ => unreachable!(),
                };
                self.inbound.add_common(&msg);
            } else {
                self.inbound.slow.push(s);
            }
        }
        self.inbound.senders = senders;
    }

    /// First message of `kind` from each slow sender in `r`'s view.
    fn for_slow(&self, d: &Delivery<ByzMsg>, r: NodeIndex, kind: MessageKind, mut f: impl FnMut(&ByzMsg)) {
        if self.inbound.slow.is_empty() {
            return;
        }
        let view = self.views[r].as_ref().expect("view");
        for &s in &self.inbound.slow {
            if !view.contains(s) {
                continue;
            }
            let first = self.inbound.by_sender[s]
                .iter()
                .filter_map(|&i| d.items()[i as usize].message_for(r))
                .find(|m| m.kind() == kind);
            if let Some(m) = first {
                f(m);
            }
        }
    }

    fn king_message(&self, d: &Delivery<ByzMsg>, r: NodeIndex, king: NodeIndex) -> Option<Vote> {
        self.inbound.by_sender[king].iter().filter_map(|&i| d.items()[i as usize].message_for(r)).find_map(|m| {
            match m {
                ByzMsg::Vote(v) => Some(*v),
                _ => None,
            }
        })
    }

    fn receive(&mut self, d: &Delivery<ByzMsg>) -> Vec<usize> {
        self.classify(d);
        let phases = self.params.consensus_phases();
        let params = *self.params;
        let mut finished_iteration = Vec::new();
        for mi in 0..self.members.len() {
            let node = self.members[mi].node;
            let Some(kind) = self.members[mi].work.expects() else {
                if matches!(self.members[mi].work, Work::NewPending) {
                    self.members[mi].work = Work::Finished;
                }
                continue;
            };
            if let Some((cons, _)) = self.members[mi].work.cons() {
                // consensus rounds update in place; only the last one changes stage
                if cons.step() == 3 {
                    let king = self.members[mi].king.and_then(|k| self.king_message(d, node, k));
                    let cons = self.members[mi].work.cons_mut().expect("consensus work");
                    cons.receive_king(king);
                    if cons.done() {
                        let out = cons.output();
                        let w = core::mem::replace(&mut self.members[mi].work, Work::Idle);
                        let next = self.finish_consensus(mi, w, out, &mut finished_iteration);
                        self.members[mi].work = next;
                    }
                } else {
                    let mut t = self.inbound.votes;
                    self.for_slow(d, node, kind, |m| {
                        if let ByzMsg::Vote(v) = m {
                            t[v.code() as usize] += 1;
                        }
                    });
                    self.members[mi].work.cons_mut().expect("consensus work").receive_votes(&t, &params);
                }
                continue;
            }
            let work = core::mem::replace(&mut self.members[mi].work, Work::Idle);
            let next = match work {
                Work::Init { seg, fp } => {
                    let mut t = self.inbound.init.clone();
                    self.for_slow(d, node, kind, |m| {
                        if let ByzMsg::Init(f) = m {
                            t.add(f);
                        }
                    });
                    Work::Echo { seg, fp, echo: validator_echo(&t, &params) }
                }
                Work::Echo { seg, fp, .. } => {
                    let mut t = self.inbound.echo.clone();
                    self.for_slow(d, node, kind, |m| {
                        if let ByzMsg::Echo(f) = m {
                            t.add(f);
                        }
                    });
                    let (same, out) = validator_output(&t, &fp, &params);
                    Work::Same { seg, fp, out, cons: ConsensusNode::new(same, phases) }
                }
                Work::Diff { seg, fp, out, same, diff } => {
                    let mut ones = self.inbound.diff_true;
                    self.for_slow(d, node, kind, |m| {
                        if let ByzMsg::Diff(true) = m {
                            ones += 1;
                        }
                    });
                    let diff1 = if params.exceeds_half(ones) { true } else { diff };
                    Work::DiffCons { seg, fp, out, same, cons: ConsensusNode::new(diff1, phases) }
                }
                other => other,
            };
            self.members[mi].work = next;
        }
        finished_iteration
    }

    fn finish_consensus(&mut self, mi: usize, w: Work, bit: bool, finished: &mut Vec<usize>) -> Work {
        let m = &mut self.members[mi];
        let (seg, outcome) = match w {
            Work::Same { seg, fp, out, .. } => {
                return Work::Diff { seg, fp, out, same: bit, diff: bit && fp != out };
            }
            Work::DiffCons { seg, fp, out, same, .. } => {
                if same && !bit {
                    m.processed.push(seg);
                    if fp != out {
                        m.dirty.push(seg);
                        m.list.fill_leftmost(&seg, out.cnt);
                        (seg, IterationOutcome::AcceptedDirty)
                    } else {
                        (seg, IterationOutcome::Accepted)
                    }
                } else {
                    m.stack.push(seg.top().expect("segment of length >= 2"));
                    m.stack.push(seg.bot().expect("segment of length >= 2"));
                    (seg, IterationOutcome::Split)
                }
            }
            Work::Bit { seg, .. } => {
                m.list.set(seg.lo, bit);
                m.processed.push(seg);
                (seg, IterationOutcome::Singleton)
            }
            _ => unreachable!("not a consensus stage"),
        };
        m.iterations += 1;
        finished.push(mi);
        if mi == 0 {
            let round = self.net.round();
            self.net.log_mut().push(round, Event::Iteration { index: m.iterations - 1, segment: seg, outcome });
        }
        Work::Idle
    }

    fn iteration_boundary(&mut self) {
        let round = self.net.round();
        let snaps: Vec<MemberSnapshot<'_>> = self.members.iter().map(Member::snapshot).collect();
        let snap = IterationSnapshot { round, members: &snaps };
        self.monitor.iteration_boundary(&snap, &mut self.report);
    }

    fn collect_new(&mut self, d: &Delivery<ByzMsg>) {
        for r in 0..self.n() {
            if self.is_byz[r] {
                continue;
            }
            let view = self.views[r].as_ref().expect("view");
            for (s, m) in d.inbox(r) {
                if let ByzMsg::New(x) = m {
                    if view.contains(s) && !self.new_from[r].iter().any(|(u, _)| *u == s) {
                        self.new_from[r].push((s, *x));
                    }
                }
            }
        }
    }

    fn max_iterations(&self) -> u64 {
        self.members.iter().map(|m| m.iterations).max().unwrap_or(0)
    }

    fn run_loop(&mut self, cap: u64) -> Result<(), SimError> {
        loop {
            self.begin_iterations();
            if self.members.iter().all(|m| matches!(m.work, Work::Finished)) {
                return Ok(());
            }
            if self.max_iterations() >= cap {
                let round = self.net.round();
                self.net.log_mut().push(round, Event::Note { text: alloc::format!("iteration cap {cap} reached") });
                return Ok(());
            }
            self.kings();
            self.send()?;
            let stage = self.stage();
            let d = self.step(stage)?;
            let finished = self.receive(&d);
            if d.items().iter().any(|i| i.envelope.kind == MessageKind::New) {
                self.collect_new(&d);
            }
            self.last = Some(d);
            if !finished.is_empty() {
                self.iteration_boundary();
            }
        }
    }

    fn decide(&self, r: NodeIndex) -> Option<u32> {
        let got = &self.new_from[r];
        if !self.params.reaches(got.len() as u32) {
            return None;
        }
        let mut t = Tally::new();
        for (_, x) in got {
            if let Some(x) = x {
                t.add(x);
            }
        }
        t.top_two().map(|(v, _, _)| *v)
    }
}

/// Runs the protocol with corrupted set `byzantine` (indices into `ids`).
pub fn run_byzantine_protocol(
    params: &ByzParams,
    ids: Vec<NodeId>,
    mut byzantine: Vec<NodeIndex>,
    adversary: &mut dyn ByzAdversary,
    opts: &ByzRunOptions,
) -> Result<ByzRun, SimError> {
    let n = ids.len();
    assert_eq!(n as u32, params.n, "id list length must equal n");
    byzantine.sort_unstable();
    byzantine.dedup();
    if let Some(&b) = byzantine.iter().find(|b| **b >= n) {
        return Err(SimError::UnknownNode(b));
    }
    let mut is_byz = vec![false; n];
    for &b in &byzantine {
        is_byz[b] = true;
    }
    let mut report = MonitorReport::new(opts.log_level == LogLevel::Trace);
    let monitor = ByzMonitor::new(params, &ids, &byzantine, opts.budget, &mut report);
    let net = Network::new(ids.clone(), params.widths(), opts.count_policy, opts.log_level);
    let mut driver = Driver {
        params,
        shared: SharedRandomness::new(opts.seed),
        net,
        ids,
        byzantine,
        is_byz,
        adversary,
        report,
        monitor,
        views: vec![None; n],
        members: Vec::new(),
        member_group: NodeGroup::empty(n),
        core: vec![false; n],
        new_from: vec![Vec::new(); n],
        inbound: Inbound::default(),
        last: None,
        collisions: 0,
        king_cache: None,
    };
    driver.elect()?;
    driver.announce()?;
    driver.iteration_boundary();
    let f = driver.byzantine.len() as u64;
    let bound = 4.0 * f.max(1) as f64 * crate::math::log2(params.big_n as f64);
    let cap = opts.max_iterations.unwrap_or(2 * libm::ceil(bound) as u64 + 2);
    driver.run_loop(cap)?;

    let outcome: Vec<NodeOutcome> = (0..n)
        .map(|v| {
            if driver.is_byz[v] {
                NodeOutcome::Byzantine
            } else {
                driver.decide(v).map_or(NodeOutcome::Undecided, NodeOutcome::Renamed)
            }
        })
        .collect();
    let round = driver.net.round();
    for (v, o) in outcome.iter().enumerate() {
        if let NodeOutcome::Renamed(x) = o {
            let node = driver.ids[v];
            driver.net.log_mut().push(round, Event::Decided { node, new_id: *x });
        }
    }
    let timeouts =
        (0..n).filter(|v| !driver.is_byz[*v] && !params.reaches(driver.new_from[*v].len() as u32)).count() as u32;
    let iterations = driver.max_iterations();
    let pairs: Vec<(NodeId, u32)> =
        outcome.iter().enumerate().filter_map(|(v, o)| o.new_id().map(|x| (driver.ids[v], x))).collect();
    driver.monitor.finish(round, iterations, &pairs, &mut driver.report);

    let committee = driver.monitor.committee_stats();
    let success = check_unique_strong(&outcome, params.n, round).holds
        && crate::monitor::check_order_preserving(&pairs, round).holds;
    let failure = (!success).then(|| {
        if !committee.within_thresholds {
            FailureCause::CommitteeTail
        } else if driver.collisions > 0 {
            FailureCause::HashCollision
        } else {
            FailureCause::Unexplained
        }
    });
    let f_actual = driver.byzantine.len() as u32;
    let (metrics, log) = driver.net.into_parts();
    Ok(ByzRun {
        outcome,
        iterations,
        committee,
        collisions: driver.collisions,
        timeouts,
        success,
        failure,
        f_actual,
        monitors: driver.report,
        metrics,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::byzantine::{byz_strategy, BYZ_STRATEGIES};

    fn run(n: u32, strategy: &str, f: usize, seed: u64, p0: Option<f64>) -> ByzRun {
        let big_n = 5 * n as u64 * n as u64;
        let params = ByzParams::new(n, big_n, 0.05, p0).unwrap();
        let ids: Vec<NodeId> = (0..n).map(|i| NodeId(1 + i * (big_n as u32 / n) + (seed as u32 % 7))).collect();
        let byz: Vec<NodeIndex> = (0..f).map(|k| (k * 7 + seed as usize) % n as usize).collect();
        let mut adv = byz_strategy(strategy, seed).unwrap();
        let opts = ByzRunOptions {
            seed,
            budget: f,
            count_policy: CountPolicy::Sent,
            log_level: LogLevel::Summary,
            max_iterations: None,
        };
        run_byzantine_protocol(&params, ids, byz, adv.as_mut(), &opts).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn king_decomposition_matches_direct_choice(
            seed in proptest::prelude::any::<u64>(),
            core_bits in proptest::collection::vec(proptest::prelude::any::<bool>(), 12),
            extra_bits in proptest::collection::vec(proptest::prelude::any::<bool>(), 12),
            used_bits in proptest::collection::vec(proptest::prelude::any::<bool>(), 12),
        ) {
            let ids: Vec<NodeId> = (0..12).map(|i| NodeId(100 - 3 * i)).collect();
            let extras: Vec<NodeIndex> = (0..12).filter(|u| extra_bits[*u] && !core_bits[*u]).collect();
            let used: Vec<NodeIndex> = (0..12).filter(|u| used_bits[*u]).collect();
            let view: Vec<NodeIndex> = (0..12).filter(|u| core_bits[*u] || extras.contains(u)).collect();
            let seed = KingSeed(seed);
            let k = KingOrder::new(seed, 0, 0, &ids, &core_bits);
            proptest::prop_assert_eq!(k.king(&ids, &extras, &used), super::super::consensus::choose_king(&view, &ids, &used, seed));
        }
    }

    #[test]
    fn fault_free_run_takes_one_iteration() {
        let r = run(32, "silent", 0, 3, None);
        assert!(r.success, "{:?}", r.monitors.failures);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.monitors.deterministic_failures(), 0, "{:?}", r.monitors.failures);
        let got: Vec<u32> = r.outcome.iter().map(|o| o.new_id().unwrap()).collect();
        assert_eq!(got, (1..=32).collect::<Vec<_>>());
        assert!(r.metrics.conserved());
    }

    #[test]
    fn every_strategy_renames() {
        for s in BYZ_STRATEGIES {
            for seed in 0..2 {
                let r = run(32, s, 6, seed, None);
                assert!(r.success, "{s} seed {seed}: {:?} {:?}", r.failure, r.monitors.failures);
                assert_eq!(r.monitors.deterministic_failures(), 0, "{s}: {:?}", r.monitors.failures);
                assert!(r.metrics.conserved());
            }
        }
    }
}
