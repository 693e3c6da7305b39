//! Ground-truth checks run inside every trial, plus the exhaustive crash oracle.
//!
//! Monitors only see simulator-side state snapshots; they never call into the
//! protocol code they check.

mod byzantine;
mod crash;
pub mod contracts;
pub mod oracle;
mod outcome;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use byzantine::{ByzMonitor, IterationSnapshot, MemberSnapshot};
pub use crash::{check_processor_less_interval, CrashMonitor};
pub use outcome::{check_order_preserving, check_unique_strong};

/// Every checked claim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaTag {
    NoCrashIncreasingHeight,
    ProcessorLessInterval,
    CrashRebuildCommittee,
    BoundedDifferenceK,
    CrashTermination,
    Monotonicity,
    UniqueStrong,
    OrderPreserving,
    BudgetCompliance,
    MetricConservation,
    ViewContainment,
    LockstepWorkState,
    IterationBound,
    CleanMajority,
    CountConsensus,
    BoundedCommitteeUpper,
    CommitteeAnnouncement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LemmaKind {
    /// Must hold at every checkpoint; a failure is an implementation bug.
    Deterministic,
    /// Holds with high probability; tallied across seeds.
    Probabilistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Crash,
    Byzantine,
    Both,
}

impl LemmaTag {
    pub const ALL: [LemmaTag; 17] = [
        LemmaTag::NoCrashIncreasingHeight,
        LemmaTag::ProcessorLessInterval,
        LemmaTag::CrashRebuildCommittee,
        LemmaTag::BoundedDifferenceK,
        LemmaTag::CrashTermination,
        LemmaTag::Monotonicity,
        LemmaTag::UniqueStrong,
        LemmaTag::OrderPreserving,
        LemmaTag::BudgetCompliance,
        LemmaTag::MetricConservation,
        LemmaTag::ViewContainment,
        LemmaTag::LockstepWorkState,
        LemmaTag::IterationBound,
        LemmaTag::CleanMajority,
        LemmaTag::CountConsensus,
        LemmaTag::BoundedCommitteeUpper,
        LemmaTag::CommitteeAnnouncement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LemmaTag::NoCrashIncreasingHeight => "no-crash-increasing-height",
            LemmaTag::ProcessorLessInterval => "processor-less-interval",
            LemmaTag::CrashRebuildCommittee => "crash-rebuild-committee",
            LemmaTag::BoundedDifferenceK => "bounded-difference-k",
            LemmaTag::CrashTermination => "crash-termination",
            LemmaTag::Monotonicity => "monotonicity",
            LemmaTag::UniqueStrong => "unique-strong",
            LemmaTag::OrderPreserving => "order-preserving",
            LemmaTag::BudgetCompliance => "budget-compliance",
            LemmaTag::MetricConservation => "metric-conservation",
            LemmaTag::ViewContainment => "view-containment",
            LemmaTag::LockstepWorkState => "lockstep-work-state",
            LemmaTag::IterationBound => "iteration-bound",
            LemmaTag::CleanMajority => "clean-majority",
            LemmaTag::CountConsensus => "count-consensus",
            LemmaTag::BoundedCommitteeUpper => "bounded-committee-upper",
            LemmaTag::CommitteeAnnouncement => "committee-announcement",
        }
    }

    pub fn kind(self) -> LemmaKind {
        match self {
            LemmaTag::BoundedCommitteeUpper | LemmaTag::CommitteeAnnouncement => LemmaKind::Probabilistic,
            _ => LemmaKind::Deterministic,
        }
    }

    pub fn scope(self) -> Scope {
        match self {
            LemmaTag::NoCrashIncreasingHeight
            | LemmaTag::ProcessorLessInterval
            | LemmaTag::CrashRebuildCommittee
            | LemmaTag::BoundedDifferenceK
            | LemmaTag::CrashTermination
            | LemmaTag::Monotonicity
            | LemmaTag::BoundedCommitteeUpper => Scope::Crash,
            LemmaTag::OrderPreserving
            | LemmaTag::ViewContainment
            | LemmaTag::LockstepWorkState
            | LemmaTag::IterationBound
            | LemmaTag::CleanMajority
            | LemmaTag::CountConsensus
            | LemmaTag::CommitteeAnnouncement => Scope::Byzantine,
            LemmaTag::UniqueStrong | LemmaTag::BudgetCompliance | LemmaTag::MetricConservation => Scope::Both,
        }
    }

    fn applies_to(self, scope: Scope) -> bool {
        self.scope() == scope || self.scope() == Scope::Both
    }
}

/// Lemmas each protocol's monitors must cover.
pub fn manifest(scope: Scope) -> Vec<LemmaTag> {
    LemmaTag::ALL.iter().copied().filter(|t| t.applies_to(scope)).collect()
}

/// Checks that `registered` covers `manifest(scope)` exactly once each.
pub fn registry_complete(scope: Scope, registered: &[LemmaTag]) -> Result<(), String> {
    let mut seen = BTreeMap::new();
    for t in registered {
        *seen.entry(*t).or_insert(0u32) += 1;
    }
    for t in manifest(scope) {
        match seen.get(&t) {
            None => return Err(alloc::format!("no monitor for {}", t.name())),
            Some(c) if *c > 1 => return Err(alloc::format!("{} monitors for {}", c, t.name())),
            _ => {}
        }
    }
    for t in registered {
        if !t.applies_to(scope) {
            return Err(alloc::format!("{} does not belong to this protocol", t.name()));
        }
    }
    Ok(())
}

/// One checkpoint result.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub lemma: LemmaTag,
    pub round: u64,
    pub holds: bool,
    pub witness: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub checks: u64,
    pub failures: u64,
}

/// Aggregated monitor results of one trial.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub tallies: BTreeMap<LemmaTag, Tally>,
    /// First failures, capped.
    pub failures: Vec<MonitorVerdict>,
    /// Every verdict, kept only when tracing.
    pub verdicts: Vec<MonitorVerdict>,
    #[serde(skip)]
    keep_all: bool,
}

const MAX_RECORDED_FAILURES: usize = 64;

impl MonitorReport {
    pub fn new(keep_all: bool) -> Self {
        MonitorReport { keep_all, ..Default::default() }
    }

    pub fn register(&mut self, lemma: LemmaTag) {
        self.tallies.entry(lemma).or_default();
    }

    pub fn record(&mut self, lemma: LemmaTag, round: u64, holds: bool, witness: impl FnOnce() -> String) {
        let t = self.tallies.entry(lemma).or_default();
        t.checks += 1;
        if !holds {
            t.failures += 1;
        }
        if !holds || self.keep_all {
            let v = MonitorVerdict { lemma, round, holds, witness: (!holds).then(witness) };
            if !holds && self.failures.len() < MAX_RECORDED_FAILURES {
                self.failures.push(v.clone());
            }
            if self.keep_all {
                self.verdicts.push(v);
            }
        }
    }

    pub fn registered(&self) -> Vec<LemmaTag> {
        self.tallies.keys().copied().collect()
    }

    /// Failures of deterministic lemmas.
    pub fn deterministic_failures(&self) -> u64 {
        self.tallies.iter().filter(|(t, _)| t.kind() == LemmaKind::Deterministic).map(|(_, c)| c.failures).sum()
    }

    pub fn failures_of(&self, lemma: LemmaTag) -> u64 {
        self.tallies.get(&lemma).map(|t| t.failures).unwrap_or(0)
    }

    pub fn checks_of(&self, lemma: LemmaTag) -> u64 {
        self.tallies.get(&lemma).map(|t| t.checks).unwrap_or(0)
    }

    pub fn holds(&self, lemma: LemmaTag) -> bool {
        self.failures_of(lemma) == 0
    }
}
