//! Static Byzantine strategies. The corrupted set is fixed before round 1;
//! corrupted nodes collude, see their own inboxes and the shared randomness,
//! and send anything under their own identities.

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::byz::{ByzMsg, ByzParams, Fingerprint, IdentityList, SegmentHash, Stage, Vote};
use crate::interval::Interval;
use crate::net::rng::{env_stream, DrawKind, EnvStream, SharedRandomness};
use crate::net::{Delivery, Network, NodeGroup, NodeId, NodeIndex, SimError};

/// What the corrupted nodes know at the start of a round.
pub struct ByzObservation<'a> {
    pub round: u64,
    /// Position in the public lockstep schedule, readable off the message
    /// kinds any committee member receives.
    pub stage: Stage,
    pub ids: &'a [NodeId],
    pub byzantine: &'a [NodeIndex],
    pub shared: &'a SharedRandomness,
    pub params: &'a ByzParams,
    pub(crate) last: Option<&'a Delivery<ByzMsg>>,
}

impl ByzObservation<'_> {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn is_byzantine(&self, v: NodeIndex) -> bool {
        self.byzantine.binary_search(&v).is_ok()
    }

    /// Shared lottery verdict for `id`.
    pub fn elected(&self, id: NodeId) -> bool {
        self.shared.lottery(DrawKind::CommitteeLottery, id.0 as u64, self.params.p0)
    }

    /// Messages delivered to corrupted node `b` in the previous round.
    pub fn inbox(&self, b: NodeIndex) -> Vec<(NodeIndex, ByzMsg)> {
        assert!(self.is_byzantine(b), "node {b} is not corrupted");
        match self.last {
            Some(d) => d.inbox(b).map(|(s, m)| (s, *m)).collect(),
            None => Vec::new(),
        }
    }
}

/// Send handle restricted to corrupted senders.
pub struct ByzOutbox<'a> {
    pub(crate) net: &'a mut Network<ByzMsg>,
    pub(crate) byzantine: &'a [NodeIndex],
}

impl ByzOutbox<'_> {
    fn check(&self, from: NodeIndex) -> Result<(), SimError> {
        if self.byzantine.binary_search(&from).is_err() {
            return Err(SimError::UnknownNode(from));
        }
        Ok(())
    }

    pub fn send(&mut self, from: NodeIndex, to: NodeIndex, msg: ByzMsg) -> Result<(), SimError> {
        self.check(from)?;
        self.net.send(from, to, msg)
    }

    pub fn multicast(&mut self, from: NodeIndex, to: &Rc<NodeGroup>, msg: ByzMsg) -> Result<(), SimError> {
        self.check(from)?;
        self.net.multicast(from, to.clone(), msg)
    }

    pub fn broadcast(&mut self, from: NodeIndex, msg: ByzMsg) -> Result<(), SimError> {
        self.check(from)?;
        self.net.broadcast(from, msg)
    }
}

pub trait ByzAdversary {
    fn name(&self) -> &'static str;
    fn act(&mut self, obs: &ByzObservation<'_>, out: &mut ByzOutbox<'_>) -> Result<(), SimError>;
}

/// Correct committee members as seen through the ELECT round, split in two
/// random halves.
struct Halves {
    correct_members: Vec<NodeIndex>,
    a: Rc<NodeGroup>,
    b: Rc<NodeGroup>,
}

impl Halves {
    fn learn(obs: &ByzObservation<'_>, rng: &mut ChaCha8Rng) -> Option<Halves> {
        let spy = *obs.byzantine.first()?;
        let mut members: Vec<NodeIndex> = obs
            .inbox(spy)
            .into_iter()
            .filter(|(s, m)| matches!(m, ByzMsg::Elect { .. }) && !obs.is_byzantine(*s))
            .map(|(s, _)| s)
            .collect();
        members.sort_unstable();
        members.dedup();
        let mut shuffled = members.clone();
        shuffled.shuffle(rng);
        let half = shuffled.len() / 2;
        let n = obs.n();
        Some(Halves {
            a: Rc::new(NodeGroup::from_members(n, shuffled[..half].iter().copied())),
            b: Rc::new(NodeGroup::from_members(n, shuffled[half..].iter().copied())),
            correct_members: members,
        })
    }

    fn everyone(&self, n: usize) -> Rc<NodeGroup> {
        Rc::new(NodeGroup::from_members(n, self.correct_members.iter().copied()))
    }
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, from: &[NodeIndex]) -> Rc<NodeGroup> {
    Rc::new(NodeGroup::from_members(n, from.iter().copied().filter(|_| rng.random_bool(0.5))))
}

fn elect_all(obs: &ByzObservation<'_>, out: &mut ByzOutbox<'_>) -> Result<(), SimError> {
    for &b in obs.byzantine {
        if obs.elected(obs.ids[b]) {
            out.broadcast(b, ByzMsg::Elect { id: obs.ids[b].0 })?;
        }
    }
    Ok(())
}

pub struct Silent;

impl ByzAdversary for Silent {
    fn name(&self) -> &'static str {
        "silent"
    }

    fn act(&mut self, _obs: &ByzObservation<'_>, _out: &mut ByzOutbox<'_>) -> Result<(), SimError> {
        Ok(())
    }
}

/// ELECT and ID announcements to independent random halves of the network,
/// so both views and identity lists diverge; silent afterwards.
pub struct SelectiveAnnouncer {
    rng: ChaCha8Rng,
}

impl SelectiveAnnouncer {
    pub fn new(seed: u64) -> Self {
        SelectiveAnnouncer { rng: env_stream(seed, EnvStream::Adversary) }
    }
}

impl ByzAdversary for SelectiveAnnouncer {
    fn name(&self) -> &'static str {
        "selective_announcer"
    }

    fn act(&mut self, obs: &ByzObservation<'_>, out: &mut ByzOutbox<'_>) -> Result<(), SimError> {
        let n = obs.n();
        match obs.stage {
            Stage::Elect => {
                let all: Vec<NodeIndex> = (0..n).collect();
                for &b in obs.byzantine {
                    if obs.elected(obs.ids[b]) {
                        let g = random_subset(&mut self.rng, n, &all);
                        out.multicast(b, &g, ByzMsg::Elect { id: obs.ids[b].0 })?;
                    }
                }
            }
            Stage::Announce => {
                let Some(h) = Halves::learn(obs, &mut self.rng) else { return Ok(()) };
                for &b in obs.byzantine {
                    let g = random_subset(&mut self.rng, n, &h.correct_members);
                    out.multicast(b, &g, ByzMsg::Id { id: obs.ids[b].0 })?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Every corrupted node announces its id to exactly half of the correct
/// committee (a fresh random half per node); silent afterwards.
pub struct ListPoisoner {
    rng: ChaCha8Rng,
}

impl ListPoisoner {
    pub fn new(seed: u64) -> Self {
        ListPoisoner { rng: env_stream(seed, EnvStream::Adversary) }
    }
}

impl ByzAdversary for ListPoisoner {
    fn name(&self) -> &'static str {
        "list_poisoner"
    }

    fn act(&mut self, obs: &ByzObservation<'_>, out: &mut ByzOutbox<'_>) -> Result<(), SimError> {
        match obs.stage {
            Stage::Elect => elect_all(obs, out)?,
            Stage::Announce => {
                let Some(h) = Halves::learn(obs, &mut self.rng) else { return Ok(()) };
                let mut members = h.correct_members.clone();
                for &b in obs.byzantine {
                    members.shuffle(&mut self.rng);
                    let half = members.len() / 2;
                    let g = Rc::new(NodeGroup::from_members(obs.n(), members[..half].iter().copied()));
                    out.multicast(b, &g, ByzMsg::Id { id: obs.ids[b].0 })?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Shared setup of the two subprotocol attackers: one corrupted node poisons
/// the lists (so segments are contested), the rest announce to everyone.
struct Contest {
    rng: ChaCha8Rng,
    halves: Option<Halves>,
    everyone: Option<Rc<NodeGroup>>,
    /// Ids announced to the corrupted nodes, plus their own.
    list: IdentityList,
    learned: bool,
    poisoned: Option<u32>,
    members: Vec<NodeIndex>,
}

impl Contest {
    fn new(seed: u64) -> Self {
        Contest {
            rng: env_stream(seed, EnvStream::Adversary),
            halves: None,
            everyone: None,
            list: IdentityList::new(),
            learned: false,
            poisoned: None,
            members: Vec::new(),
        }
    }

    /// Handles ELECT and ID rounds; returns whether the round was consumed.
    fn setup(&mut self, obs: &ByzObservation<'_>, out: &mut ByzOutbox<'_>) -> Result<bool, SimError> {
        match obs.stage {
            Stage::Elect => {
                elect_all(obs, out)?;
                self.members = obs.byzantine.iter().copied().filter(|b| obs.elected(obs.ids[*b])).collect();
                Ok(true)
            }
            Stage::Announce => {
                let Some(h) = Halves::learn(obs, &mut self.rng) else { return Ok(true) };
                let all = h.everyone(obs.n());
                for (k, &b) in obs.byzantine.iter().enumerate() {
                    let to = if k == 0 { &h.a } else { &all };
                    out.multicast(b, to, ByzMsg::Id { id: obs.ids[b].0 })?;
                }
                self.poisoned = obs.byzantine.first().map(|b| obs.ids[*b].0);
                self.list = IdentityList::from_ids(obs.byzantine.iter().map(|b| obs.ids[*b].0));
                self.everyone = Some(all);
                self.halves = Some(h);
                Ok(true)
            }
            _ => {
                if !self.learned {
                    self.learned = true;
                    // every id announced to the spy in the previous round
                    if let Some(&spy) = self.members.first() {
                        for (_, m) in obs.inbox(spy) {
                            if let ByzMsg::Id { id } = m {
                                self.list.set(id, true);
                            }
                        }
                    }
                }
                Ok(self.halves.is_none())
            }
        }
    }

    /// The two fingerprints correct members hold for `segment`: with and
    /// without the poisoned id.
    fn candidates(&self, obs: &ByzObservation<'_>, iteration: u64, segment: Interval) -> (Fingerprint, Fingerprint) {
        let h = SegmentHash::for_iteration(obs.shared, iteration, obs.params.widths().hash);
        let with = self.list.segment(&segment);
        let fa = Fingerprint { hash: h.hash_ones(segment.lo, with), cnt: with.len() as u32 };
        let without: Vec<u32> = with.iter().copied().filter(|x| Some(*x) != self.poisoned).collect();
        let fb = Fingerprint { hash: h.hash_ones(segment.lo, &without), cnt: without.len() as u32 };
        (fa, fb)
    }

}

/// Splits the correct committee and feeds each half a different
/// fingerprint in INIT and ECHO, pushing counts toward the `c_g` and
/// `c_g/2` thresholds from both sides.
pub struct ValidatorEquivocator {
    c: Contest,
}

impl ValidatorEquivocator {
    pub fn new(seed: u64) -> Self {
        ValidatorEquivocator { c: Contest::new(seed) }
    }
}

/// Per-receiver ECHO choices of the equivocator: the two most frequent
/// correct INIT values go to opposite halves.
pub fn equivocating_echo(observed: &[Fingerprint]) -> (Fingerprint, Fingerprint) {
    let mut t = crate::byz::Tally::new();
    for f in observed {
        t.add(f);
    }
    let mut entries: Vec<(Fingerprint, u32)> = observed.iter().map(|f| (*f, t.count(f))).collect();
    entries.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    entries.dedup_by_key(|e| e.0);
    let first = entries.first().map(|e| e.0).unwrap_or_default();
    let second = entries.get(1).map(|e| e.0).unwrap_or(Fingerprint { hash: first.hash, cnt: first.cnt ^ 1 });
    (first, second)
}

impl ByzAdversary for ValidatorEquivocator {
    fn name(&self) -> &'static str {
        "validator_equivocator"
    }

    fn act(&mut self, obs: &ByzObservation<'_>, out: &mut ByzOutbox<'_>) -> Result<(), SimError> {
        if self.c.setup(obs, out)? {
            return Ok(());
        }
        let h = self.c.halves.as_ref().expect("set up");
        match obs.stage {
            Stage::ValInit { iteration, segment } => {
                let (fa, fb) = self.c.candidates(obs, iteration, segment);
                for &b in &self.c.members {
                    out.multicast(b, &h.a, ByzMsg::Init(fa))?;
                    out.multicast(b, &h.b, ByzMsg::Init(fb))?;
                }
            }
            Stage::ValEcho { .. } => {
                let Some(&spy) = self.c.members.first() else { return Ok(()) };
                let seen: Vec<Fingerprint> = obs
                    .inbox(spy)
                    .into_iter()
                    .filter(|(s, _)| !obs.is_byzantine(*s))
                    .filter_map(|(_, m)| match m {
                        ByzMsg::Init(f) => Some(f),
                        _ => None,
                    })
                    .collect();
                let (first, second) = equivocating_echo(&seen);
                for &b in &self.c.members {
                    out.multicast(b, &h.a, ByzMsg::Echo(first))?;
                    out.multicast(b, &h.b, ByzMsg::Echo(second))?;
                }
            }
            Stage::Diff { .. } => {
                for &b in &self.c.members {
                    out.multicast(b, &h.a, ByzMsg::Diff(true))?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Votes to keep the two halves apart in every consensus round: opposite
/// values in round 1, the majority proposal to one half only in round 2
/// (making it strong while the other half stays weak), and opposite king
/// messages in round 3.
pub struct ConsensusSaboteur {
    c: Contest,
    majority: bool,
}

impl ConsensusSaboteur {
    pub fn new(seed: u64) -> Self {
        ConsensusSaboteur { c: Contest::new(seed), majority: false }
    }
}

impl ByzAdversary for ConsensusSaboteur {
    fn name(&self) -> &'static str {
        "consensus_saboteur"
    }

    fn act(&mut self, obs: &ByzObservation<'_>, out: &mut ByzOutbox<'_>) -> Result<(), SimError> {
        if self.c.setup(obs, out)? {
            return Ok(());
        }
        let h = self.c.halves.as_ref().expect("set up");
        match obs.stage {
            Stage::Consensus { step: 1, .. } => {
                for &b in &self.c.members {
                    out.multicast(b, &h.a, ByzMsg::Vote(Vote::Zero))?;
                    out.multicast(b, &h.b, ByzMsg::Vote(Vote::One))?;
                }
            }
            Stage::Consensus { step: 2, .. } => {
                if let Some(&spy) = self.c.members.first() {
                    let mut t = [0u32; 3];
                    for (s, m) in obs.inbox(spy) {
                        if let (false, ByzMsg::Vote(v)) = (obs.is_byzantine(s), m) {
                            t[v.code() as usize] += 1;
                        }
                    }
                    self.majority = t[1] > t[0];
                }
                let x = Vote::from_bit(self.majority);
                let y = Vote::from_bit(!self.majority);
                for &b in &self.c.members {
                    out.multicast(b, &h.a, ByzMsg::Vote(x))?;
                    out.multicast(b, &h.b, ByzMsg::Vote(y))?;
                }
            }
            Stage::Consensus { step: 3, .. } => {
                let x = Vote::from_bit(self.majority);
                let y = Vote::from_bit(!self.majority);
                for &b in &self.c.members {
                    out.multicast(b, &h.a, ByzMsg::Vote(x))?;
                    out.multicast(b, &h.b, ByzMsg::Vote(y))?;
                }
            }
            Stage::Diff { .. } => {
                let flip = self.c.rng.random_bool(0.5);
                for &b in &self.c.members {
                    out.multicast(b, &h.a, ByzMsg::Diff(flip))?;
                    out.multicast(b, &h.b, ByzMsg::Diff(!flip))?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

pub const BYZ_STRATEGIES: [&str; 5] =
    ["silent", "selective_announcer", "list_poisoner", "validator_equivocator", "consensus_saboteur"];

pub fn byz_strategy(name: &str, seed: u64) -> Option<Box<dyn ByzAdversary>> {
    Some(match name {
        "silent" => Box::new(Silent),
        "selective_announcer" => Box::new(SelectiveAnnouncer::new(seed)),
        "list_poisoner" => Box::new(ListPoisoner::new(seed)),
        "validator_equivocator" => Box::new(ValidatorEquivocator::new(seed)),
        "consensus_saboteur" => Box::new(ConsensusSaboteur::new(seed)),
        _ => return None,
    })
}
