//! One seeded trial: configuration in, transcript out.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::adversary::byzantine::byz_strategy;
use crate::adversary::crash::crash_strategy;
use crate::byz::{run_byzantine_protocol, ByzParams, ByzRunOptions, CommitteeStats, FailureCause};
use crate::crash::{run_crash_protocol, CrashParams, CrashRunOptions, PhaseSummary};
use crate::monitor::{check_unique_strong, registry_complete, LemmaTag, MonitorReport, Scope};
use crate::net::rng::{env_stream, EnvStream};
use crate::net::{CountPolicy, EventLog, LogLevel, MetricCounters, NodeId, NodeIndex, NodeOutcome, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Crash,
    Byzantine,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Crash => "crash",
            Protocol::Byzantine => "byzantine",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub name: String,
    pub budget_f: usize,
    /// Reserved; the built-in strategies take no tunables.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default)]
    pub p0: Option<f64>,
    /// With `false`, configurations whose election probabilities exceed 1 are rejected.
    #[serde(default = "yes")]
    pub clamp: bool,
    #[serde(default)]
    pub election_constant: Option<f64>,
    #[serde(default)]
    pub count_policy: CountPolicy,
    #[serde(default)]
    pub early_exit: bool,
    #[serde(default)]
    pub max_iterations: Option<u64>,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides {
            p0: None,
            clamp: true,
            election_constant: None,
            count_policy: CountPolicy::Sent,
            early_exit: false,
            max_iterations: None,
        }
    }
}

fn default_epsilon0() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub protocol: Protocol,
    pub n: u32,
    #[serde(rename = "N")]
    pub big_n: u64,
    #[serde(default = "default_epsilon0")]
    pub epsilon0: f64,
    #[serde(default)]
    pub seed: u64,
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub overrides: Overrides,
}

impl TrialConfig {
    pub fn new(protocol: Protocol, n: u32, big_n: u64, adversary: &str, budget_f: usize, seed: u64) -> Self {
        TrialConfig {
            protocol,
            n,
            big_n,
            epsilon0: default_epsilon0(),
            seed,
            adversary: AdversarySpec { name: adversary.to_string(), budget_f, params: BTreeMap::new() },
            overrides: Overrides::default(),
        }
    }

    pub fn crash_params(&self) -> CrashParams {
        let mut p = CrashParams::new(self.n, self.big_n);
        if let Some(c) = self.overrides.election_constant {
            p.election_constant = c;
        }
        p.early_exit = self.overrides.early_exit;
        p
    }

    pub fn byz_params(&self) -> Result<ByzParams, TrialError> {
        ByzParams::new(self.n, self.big_n, self.epsilon0, self.overrides.p0).map_err(|e| TrialError::Config(e.to_string()))
    }

    /// Rejects configurations outside the protocols' preconditions.
    pub fn validate(&self) -> Result<(), TrialError> {
        let bad = |s: String| Err(TrialError::Config(s));
        if self.n < 4 {
            return bad(format!("n = {} is below 4", self.n));
        }
        if self.big_n < self.n as u64 || self.big_n > u32::MAX as u64 {
            return bad(format!("N = {} must lie in [n, 2^32)", self.big_n));
        }
        if !self.adversary.params.is_empty() {
            return bad(format!("strategy {} takes no parameters", self.adversary.name));
        }
        let f = self.adversary.budget_f;
        match self.protocol {
            Protocol::Crash => {
                if f >= self.n as usize {
                    return bad(format!("crash budget {f} must be below n = {}", self.n));
                }
                if crash_strategy(&self.adversary.name, f, 0).is_none() {
                    return bad(format!("unknown crash strategy {}", self.adversary.name));
                }
                if self.overrides.p0.is_some() || self.overrides.max_iterations.is_some() {
                    return bad("p0 and max_iterations apply to the Byzantine protocol only".into());
                }
                let p = self.crash_params();
                if !(p.election_constant > 0.0) {
                    return bad(format!("election constant {} must be positive", p.election_constant));
                }
                if !self.overrides.clamp && p.raw_election_probability(0) > 1.0 {
                    return bad(format!("election probability {:.3} exceeds 1 and clamping is off", p.raw_election_probability(0)));
                }
            }
            Protocol::Byzantine => {
                let p = self.byz_params()?;
                if f > p.f_bound as usize {
                    return bad(format!("Byzantine budget {f} exceeds {} = ceil((1/3 - eps0) n) - 1", p.f_bound));
                }
                if byz_strategy(&self.adversary.name, 0).is_none() {
                    return bad(format!("unknown Byzantine strategy {}", self.adversary.name));
                }
                if self.overrides.election_constant.is_some() || self.overrides.early_exit {
                    return bad("election_constant and early_exit apply to the crash protocol only".into());
                }
                if !self.overrides.clamp && self.overrides.p0.is_none() && ByzParams::raw_p0(self.n, self.epsilon0) > 1.0 {
                    return bad(format!("p0 = {:.3} exceeds 1 and clamping is off", ByzParams::raw_p0(self.n, self.epsilon0)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrialError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("monitor registry incomplete: {0}")]
    Registry(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum Detail {
    Crash {
        phases: u32,
        ever_elected: u32,
        phase_summaries: Vec<PhaseSummary>,
    },
    Byzantine {
        iterations: u64,
        committee: CommitteeStats,
        collisions: u64,
        timeouts: u32,
        failure: Option<FailureCause>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: TrialConfig,
    pub ids: Vec<NodeId>,
    pub byzantine: Vec<NodeIndex>,
    pub outcome: Vec<NodeOutcome>,
    pub f_actual: u32,
    pub success: bool,
    pub detail: Detail,
    pub metrics: MetricCounters,
    pub monitors: MonitorReport,
    pub events: EventLog,
}

/// One CSV row per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub protocol: Protocol,
    pub n: u32,
    #[serde(rename = "N")]
    pub big_n: u64,
    pub f_budget: usize,
    pub f_actual: u32,
    pub seed: u64,
    pub rounds: u64,
    pub messages: u64,
    pub bits: u64,
    pub success: bool,
    pub monitor_failures: u64,
}

impl Transcript {
    pub fn summary(&self) -> SummaryRow {
        SummaryRow {
            protocol: self.config.protocol,
            n: self.config.n,
            big_n: self.config.big_n,
            f_budget: self.config.adversary.budget_f,
            f_actual: self.f_actual,
            seed: self.config.seed,
            rounds: self.metrics.rounds_total,
            messages: self.metrics.messages_total,
            bits: self.metrics.bits_total,
            success: self.success,
            monitor_failures: self.monitors.deterministic_failures(),
        }
    }

    /// `(original id, new id)` of every renamed node.
    pub fn renamed(&self) -> Vec<(NodeId, u32)> {
        self.ids.iter().zip(&self.outcome).filter_map(|(id, o)| o.new_id().map(|x| (*id, x))).collect()
    }
}

/// Distinct ids drawn uniformly from `[1, N]`, in node-table order.
pub fn assign_ids(n: u32, big_n: u64, seed: u64) -> Vec<NodeId> {
    let mut rng = env_stream(seed, EnvStream::IdAssignment);
    sample(&mut rng, big_n as usize, n as usize).into_iter().map(|i| NodeId(i as u32 + 1)).collect()
}

/// The statically corrupted node indices, sorted.
pub fn corrupt_set(n: u32, f: usize, seed: u64) -> Vec<NodeIndex> {
    let mut rng = env_stream(seed, EnvStream::ByzantineSet);
    let mut v = sample(&mut rng, n as usize, f).into_vec();
    v.sort_unstable();
    v
}

fn adversary_seed(seed: u64) -> u64 {
    env_stream(seed, EnvStream::Adversary).next_u64()
}

fn close_report(report: &mut MonitorReport, outcome: &[NodeOutcome], n: u32, metrics: &MetricCounters, scope: Scope) -> Result<bool, TrialError> {
    let round = metrics.rounds_total;
    let v = check_unique_strong(outcome, n, round);
    report.record(LemmaTag::UniqueStrong, round, v.holds, || v.witness.clone().unwrap_or_default());
    report.record(LemmaTag::MetricConservation, round, metrics.conserved(), || {
        format!("messages_total {} vs per-round sum {}", metrics.messages_total, metrics.messages_per_round.iter().sum::<u64>())
    });
    registry_complete(scope, &report.registered()).map_err(TrialError::Registry)?;
    Ok(v.holds)
}

/// Runs one trial. Identical `(config, log_level)` give identical transcripts.
pub fn run_trial(cfg: &TrialConfig, log_level: LogLevel) -> Result<Transcript, TrialError> {
    cfg.validate()?;
    let ids = assign_ids(cfg.n, cfg.big_n, cfg.seed);
    let f = cfg.adversary.budget_f;
    match cfg.protocol {
        Protocol::Crash => {
            let params = cfg.crash_params();
            let mut adv = crash_strategy(&cfg.adversary.name, f, adversary_seed(cfg.seed)).expect("validated");
            let opts = CrashRunOptions { seed: cfg.seed, budget: f, count_policy: cfg.overrides.count_policy, log_level };
            let mut run = run_crash_protocol(&params, ids.clone(), adv.as_mut(), &opts)?;
            let success = close_report(&mut run.monitors, &run.outcome, cfg.n, &run.metrics, Scope::Crash)?;
            Ok(Transcript {
                config: cfg.clone(),
                ids,
                byzantine: Vec::new(),
                outcome: run.outcome,
                f_actual: run.f_actual,
                success,
                detail: Detail::Crash {
                    phases: run.phases_run,
                    ever_elected: run.ever_elected,
                    phase_summaries: run.phase_summaries,
                },
                metrics: run.metrics,
                monitors: run.monitors,
                events: run.log,
            })
        }
        Protocol::Byzantine => {
            let params = cfg.byz_params()?;
            let byzantine = corrupt_set(cfg.n, f, cfg.seed);
            let mut adv = byz_strategy(&cfg.adversary.name, adversary_seed(cfg.seed)).expect("validated");
            let opts = ByzRunOptions {
                seed: cfg.seed,
                budget: f,
                count_policy: cfg.overrides.count_policy,
                log_level,
                max_iterations: cfg.overrides.max_iterations,
            };
            let mut run = run_byzantine_protocol(&params, ids.clone(), byzantine.clone(), adv.as_mut(), &opts)?;
            close_report(&mut run.monitors, &run.outcome, cfg.n, &run.metrics, Scope::Byzantine)?;
            Ok(Transcript {
                config: cfg.clone(),
                ids,
                byzantine,
                outcome: run.outcome,
                f_actual: run.f_actual,
                success: run.success,
                detail: Detail::Byzantine {
                    iterations: run.iterations,
                    committee: run.committee,
                    collisions: run.collisions,
                    timeouts: run.timeouts,
                    failure: run.failure,
                },
                metrics: run.metrics,
                monitors: run.monitors,
                events: run.log,
            })
        }
    }
}
