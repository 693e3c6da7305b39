//! Adaptive crash strategies.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::crash::{CrashMsg, CrashNodeState};
use crate::net::rng::{env_stream, EnvStream};
use crate::net::{CrashDecision, Envelope, NodeIndex, RoundClock};

/// What a crash adversary sees before a round is delivered: every node's
/// state, every send of this round, and the schedule position.
pub struct CrashObservation<'a> {
    pub clock: RoundClock,
    pub total_phases: u32,
    pub states: &'a [CrashNodeState],
    pub pending: &'a [Envelope<CrashMsg>],
    pub budget_left: usize,
}

impl CrashObservation<'_> {
    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn alive(&self) -> impl Iterator<Item = NodeIndex> + '_ {
        self.states.iter().enumerate().filter(|(_, s)| !s.crashed).map(|(i, _)| i)
    }

    pub fn alive_count(&self) -> usize {
        self.states.iter().filter(|s| !s.crashed).count()
    }

    /// Live nodes announcing membership in this round.
    pub fn announcing(&self) -> Vec<NodeIndex> {
        let mut v: Vec<NodeIndex> = self
            .pending
            .iter()
            .filter(|e| matches!(e.kind, crate::net::MessageKind::ElectNotify))
            .map(|e| e.sender)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Live nodes with the elected flag.
    pub fn members(&self) -> Vec<NodeIndex> {
        self.alive().filter(|&i| self.states[i].elected).collect()
    }

    /// Receivers of `sender`'s pending sends.
    pub fn receivers_of(&self, sender: NodeIndex) -> Vec<NodeIndex> {
        let n = self.n();
        let mut r: Vec<NodeIndex> =
            self.pending.iter().filter(|e| e.sender == sender).flat_map(|e| e.receivers(n)).collect();
        r.sort_unstable();
        r.dedup();
        r
    }
}

pub trait CrashAdversary {
    fn name(&self) -> &'static str;
    fn decide(&mut self, obs: &CrashObservation<'_>) -> CrashDecision;
}

pub struct NoCrashes;

impl CrashAdversary for NoCrashes {
    fn name(&self) -> &'static str {
        "none"
    }

    fn decide(&mut self, _obs: &CrashObservation<'_>) -> CrashDecision {
        CrashDecision::none()
    }
}

fn random_half(rng: &mut ChaCha8Rng, items: &[NodeIndex]) -> Vec<NodeIndex> {
    items.iter().copied().filter(|_| rng.random_bool(0.5)).collect()
}

/// Crashes uniformly chosen live nodes at uniformly chosen rounds, each with
/// a random delivered subset.
pub struct UniformRandom {
    budget: usize,
    rng: ChaCha8Rng,
    plan: Option<BTreeMap<u64, usize>>,
}

impl UniformRandom {
    pub fn new(budget: usize, seed: u64) -> Self {
        UniformRandom { budget, rng: env_stream(seed, EnvStream::Adversary), plan: None }
    }
}

impl CrashAdversary for UniformRandom {
    fn name(&self) -> &'static str {
        "uniform_random"
    }

    fn decide(&mut self, obs: &CrashObservation<'_>) -> CrashDecision {
        let rounds = 3 * obs.total_phases as u64;
        if self.plan.is_none() {
            let mut plan = BTreeMap::new();
            for _ in 0..self.budget {
                *plan.entry(self.rng.random_range(1..=rounds)).or_insert(0) += 1;
            }
            self.plan = Some(plan);
        }
        let want = self.plan.as_ref().and_then(|p| p.get(&obs.clock.round)).copied().unwrap_or(0);
        let mut alive: Vec<NodeIndex> = obs.alive().collect();
        let k = want.min(obs.budget_left).min(alive.len().saturating_sub(1));
        let mut d = CrashDecision::none();
        alive.shuffle(&mut self.rng);
        for &v in &alive[..k] {
            let subset = random_half(&mut self.rng, &obs.receivers_of(v));
            d.crash(v, subset);
        }
        d
    }
}

/// Wipes the whole committee right after its announcements whenever the
/// budget allows; once no wipe is affordable, spends the rest on random
/// live nodes, non-members first.
pub struct CommitteeAssassin {
    rng: ChaCha8Rng,
}

impl CommitteeAssassin {
    pub fn new(seed: u64) -> Self {
        CommitteeAssassin { rng: env_stream(seed, EnvStream::Adversary) }
    }
}

impl CrashAdversary for CommitteeAssassin {
    fn name(&self) -> &'static str {
        "committee_assassin"
    }

    fn decide(&mut self, obs: &CrashObservation<'_>) -> CrashDecision {
        let mut d = CrashDecision::none();
        if obs.clock.sub_round != 1 || obs.budget_left == 0 {
            return d;
        }
        let committee = obs.announcing();
        let alive = obs.alive_count();
        if committee.is_empty() {
            return d;
        }
        if committee.len() <= obs.budget_left && committee.len() < alive {
            for &v in &committee {
                d.crash(v, obs.receivers_of(v));
            }
            return d;
        }
        // No wipe possible now, and the committee never shrinks without crashes.
        let mut others: Vec<NodeIndex> = obs.alive().filter(|v| !committee.contains(v)).collect();
        let mut members = committee.clone();
        others.shuffle(&mut self.rng);
        members.shuffle(&mut self.rng);
        others.extend(members);
        let k = obs.budget_left.min(alive - 1);
        for &v in &others[..k] {
            let subset = random_half(&mut self.rng, &obs.receivers_of(v));
            d.crash(v, subset);
        }
        d
    }
}

/// Lands committee wipes in the response round with a split delivery, so
/// half of the nodes progress while the rest raise their exponent.
pub struct RebuildForcer {
    rng: ChaCha8Rng,
}

impl RebuildForcer {
    pub fn new(seed: u64) -> Self {
        RebuildForcer { rng: env_stream(seed, EnvStream::Adversary) }
    }
}

impl CrashAdversary for RebuildForcer {
    fn name(&self) -> &'static str {
        "rebuild_forcer"
    }

    fn decide(&mut self, obs: &CrashObservation<'_>) -> CrashDecision {
        let mut d = CrashDecision::none();
        if obs.clock.sub_round != 3 || obs.budget_left == 0 {
            return d;
        }
        let responders: Vec<NodeIndex> = {
            let mut v: Vec<NodeIndex> = obs.pending.iter().map(|e| e.sender).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        if responders.is_empty() {
            return d;
        }
        let everyone: Vec<NodeIndex> = obs.alive().collect();
        let half = random_half(&mut self.rng, &everyone);
        let alive = everyone.len();
        if responders.len() <= obs.budget_left && responders.len() < alive {
            for &v in &responders {
                let rec = obs.receivers_of(v);
                d.crash(v, rec.into_iter().filter(|r| half.binary_search(r).is_ok()).collect());
            }
        } else if alive > 1 {
            let v = *responders.choose(&mut self.rng).expect("non-empty");
            let rec = obs.receivers_of(v);
            d.crash(v, rec.into_iter().filter(|r| half.binary_search(r).is_ok()).collect());
        }
        d
    }
}

/// A fixed list of `(round, decision)` pairs.
pub struct Scripted {
    pub script: BTreeMap<u64, CrashDecision>,
}

impl CrashAdversary for Scripted {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn decide(&mut self, obs: &CrashObservation<'_>) -> CrashDecision {
        self.script.get(&obs.clock.round).cloned().unwrap_or_default()
    }
}

pub const CRASH_STRATEGIES: [&str; 4] = ["none", "uniform_random", "committee_assassin", "rebuild_forcer"];

/// Builds a named strategy; `None` for unknown names.
pub fn crash_strategy(name: &str, budget: usize, seed: u64) -> Option<Box<dyn CrashAdversary>> {
    Some(match name {
        "none" => Box::new(NoCrashes),
        "uniform_random" => Box::new(UniformRandom::new(budget, seed)),
        "committee_assassin" => Box::new(CommitteeAssassin::new(seed)),
        "rebuild_forcer" => Box::new(RebuildForcer::new(seed)),
        _ => return None,
    })
}
