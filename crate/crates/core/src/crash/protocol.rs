use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    committee_action, init_node, plan_node_action, CommitteeResponse, CrashMsg, CrashNodeState, CrashParams,
    StatusReport,
};
use crate::adversary::crash::{CrashAdversary, CrashObservation};
use crate::math::bernoulli_from_word;
use crate::monitor::{CrashMonitor, MonitorReport};
use crate::net::rng::private_stream;
use crate::net::{
    CountPolicy, CrashDecision, Delivery, Event, EventLog, LogLevel, MetricCounters, Network, NodeGroup, NodeId,
    NodeIndex, NodeOutcome, RoundClock, SimError,
};
use rand_chacha::rand_core::RngCore;

#[derive(Clone, Debug)]
pub struct CrashRunOptions {
    pub seed: u64,
    pub budget: usize,
    pub count_policy: CountPolicy,
    pub log_level: LogLevel,
}

/// Per-phase ground truth at the end of the phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: u32,
    pub live: u32,
    pub elected: u32,
    pub min_p: u32,
    pub max_p: u32,
    pub min_depth_undecided: Option<u32>,
}

pub struct CrashRun {
    pub states: Vec<CrashNodeState>,
    pub outcome: Vec<NodeOutcome>,
    pub phases_run: u32,
    pub phase_summaries: Vec<PhaseSummary>,
    pub ever_elected: u32,
    pub f_actual: u32,
    pub monitors: MonitorReport,
    pub metrics: MetricCounters,
    pub log: EventLog,
}

struct Driver<'a> {
    params: &'a CrashParams,
    net: Network<CrashMsg>,
    states: Vec<CrashNodeState>,
    rngs: Vec<ChaCha8Rng>,
    adversary: &'a mut dyn CrashAdversary,
    budget: usize,
    monitor: CrashMonitor,
    report: MonitorReport,
}

impl Driver<'_> {
    fn step(&mut self) -> Result<Delivery<CrashMsg>, SimError> {
        let round = self.net.round() + 1;
        let decision = if self.net.crashed_count() < self.budget {
            let obs = CrashObservation {
                clock: RoundClock::crash(round),
                total_phases: self.params.phases(),
                states: &self.states,
                pending: self.net.pending(),
                budget_left: self.budget - self.net.crashed_count(),
            };
            self.adversary.decide(&obs)
        } else {
            CrashDecision::none()
        };
        let fresh = decision.crash_now.iter().filter(|v| !self.net.is_crashed(**v)).count();
        let within = self.net.crashed_count() + fresh <= self.budget;
        self.report.record(crate::monitor::LemmaTag::BudgetCompliance, round, within, || {
            alloc::format!("adversary asked for {fresh} crashes with {} left", self.budget - self.net.crashed_count())
        });
        let delivery = self.net.step_round(&decision)?;
        for &v in &decision.crash_now {
            self.states[v].crashed = true;
        }
        Ok(delivery)
    }

    fn live(&self) -> Vec<NodeIndex> {
        (0..self.states.len()).filter(|&i| !self.states[i].crashed).collect()
    }

    fn round_end(&mut self) {
        let round = self.net.round();
        self.monitor.round_end(round, &self.states, &mut self.report);
    }

    fn phase(&mut self, k: u32) -> Result<PhaseSummary, SimError> {
        let n = self.states.len();
        self.monitor.phase_start(&self.states);

        // round 1: members announce themselves on all n links
        for v in 0..n {
            let s = self.states[v];
            if s.elected && !s.crashed {
                self.net.broadcast(v, CrashMsg::Notify { id: s.id })?;
            }
        }
        let d1 = self.step()?;
        let mut heard: Vec<Vec<NodeIndex>> = vec![Vec::new(); n];
        for v in self.live() {
            heard[v] = d1
                .inbox(v)
                .filter(|(_, m)| matches!(m, CrashMsg::Notify { .. }))
                .map(|(s, _)| s)
                .collect();
            heard[v].sort_unstable();
            heard[v].dedup();
        }
        drop(d1);
        self.round_end();

        // round 2: status reports to every heard member
        let mut groups: BTreeMap<Vec<NodeIndex>, Rc<NodeGroup>> = BTreeMap::new();
        for v in self.live() {
            if heard[v].is_empty() || (self.params.early_exit && self.states[v].decided()) {
                continue;
            }
            let g = groups
                .entry(core::mem::take(&mut heard[v]))
                .or_insert_with_key(|k| Rc::new(NodeGroup::from_members(n, k.iter().copied())))
                .clone();
            let report = self.states[v].report();
            self.net.multicast(v, g, CrashMsg::Report(report))?;
        }
        let d2 = self.step()?;
        let mut member_sets: Vec<Option<Vec<NodeIndex>>> = vec![None; n];
        let mut report_of: Vec<Option<StatusReport>> = vec![None; n];
        for v in self.live() {
            if !self.states[v].elected {
                continue;
            }
            let mut senders = Vec::new();
            for (s, m) in d2.inbox(v) {
                if let CrashMsg::Report(r) = m {
                    senders.push(s);
                    report_of[s] = Some(*r);
                }
            }
            if senders.is_empty() {
                continue;
            }
            senders.sort_unstable();
            let p_max = senders.iter().map(|s| report_of[*s].expect("seen").exponent).max().expect("non-empty");
            self.states[v].exponent = p_max;
            member_sets[v] = Some(senders);
        }
        drop(d2);
        self.round_end();

        // round 3: committee responses, identical report sets share one table
        let mut tables: BTreeMap<&[NodeIndex], Rc<Vec<Option<CrashMsg>>>> = BTreeMap::new();
        for v in 0..n {
            let Some(senders) = member_sets[v].as_deref() else { continue };
            if self.states[v].crashed {
                continue;
            }
            let p_self = self.states[v].exponent;
            let table = tables
                .entry(senders)
                .or_insert_with(|| {
                    let reports: Vec<StatusReport> = senders.iter().map(|s| report_of[*s].expect("seen")).collect();
                    let responses = committee_action(&reports, p_self);
                    let mut entries = vec![None; n];
                    for (s, r) in senders.iter().zip(responses) {
                        entries[*s] = Some(CrashMsg::Response(r));
                    }
                    Rc::new(entries)
                })
                .clone();
            self.net.send_table(v, table)?;
        }
        drop(tables);
        let d3 = self.step()?;
        for v in self.live() {
            let mut r: Vec<CommitteeResponse> = d3
                .inbox(v)
                .filter_map(|(_, m)| match m {
                    CrashMsg::Response(r) if r.id == self.states[v].id => Some(*r),
                    _ => None,
                })
                .collect();
            r.sort_unstable();
            r.dedup();
            let plan = plan_node_action(&mut self.states[v], &r, self.params);
            if let Some(q) = plan.election_trial {
                if bernoulli_from_word(self.rngs[v].next_u64(), q) {
                    self.states[v].elected = true;
                }
            }
        }
        drop(d3);
        self.round_end();

        let round = self.net.round();
        self.monitor.phase_end(k, round, &self.states, &mut self.report);
        let live: Vec<&CrashNodeState> = self.states.iter().filter(|s| !s.crashed).collect();
        let summary = PhaseSummary {
            phase: k,
            live: live.len() as u32,
            elected: live.iter().filter(|s| s.elected).count() as u32,
            min_p: live.iter().map(|s| s.exponent).min().unwrap_or(0),
            max_p: live.iter().map(|s| s.exponent).max().unwrap_or(0),
            min_depth_undecided: live.iter().filter(|s| !s.decided()).map(|s| s.depth).min(),
        };
        self.net.metrics_mut().committee_size_history.push(summary.elected as u64);
        self.net.log_mut().push(
            round,
            Event::PhaseEnd {
                phase: k as u64,
                live: summary.live,
                elected: summary.elected,
                min_depth: summary.min_depth_undecided.unwrap_or(u32::MAX),
                min_p: summary.min_p,
                max_p: summary.max_p,
                decided: live.iter().filter(|s| s.decided()).count() as u32,
            },
        );
        Ok(summary)
    }
}

/// Runs all `3⌈log₂n⌉` phases against `adversary`.
pub fn run_crash_protocol(
    params: &CrashParams,
    ids: Vec<NodeId>,
    adversary: &mut dyn CrashAdversary,
    opts: &CrashRunOptions,
) -> Result<CrashRun, SimError> {
    let n = ids.len();
    assert_eq!(n as u32, params.n, "id list length must equal n");
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| private_stream(opts.seed, i as u64)).collect();
    let states: Vec<CrashNodeState> =
        ids.iter().zip(rngs.iter_mut()).map(|(id, rng)| init_node(*id, params, rng)).collect();
    let mut report = MonitorReport::new(opts.log_level == LogLevel::Trace);
    report.register(crate::monitor::LemmaTag::BudgetCompliance);
    let monitor = CrashMonitor::new(params, &states, &mut report);
    let mut net = Network::new(ids, params.widths(), opts.count_policy, opts.log_level).with_crash_budget(opts.budget);
    net.metrics_mut().committee_size_history.push(states.iter().filter(|s| s.elected).count() as u64);

    let mut driver =
        Driver { params, net, states, rngs, adversary, budget: opts.budget, monitor, report };
    let mut summaries = Vec::with_capacity(params.phases() as usize);
    for k in 1..=params.phases() {
        summaries.push(driver.phase(k)?);
    }
    let round = driver.net.round();
    driver.monitor.finish(params.phases(), round, &driver.states, &mut driver.report);

    let outcome: Vec<NodeOutcome> = driver
        .states
        .iter()
        .map(|s| {
            if s.crashed {
                NodeOutcome::Crashed
            } else if s.decided() {
                NodeOutcome::Renamed(s.interval.lo)
            } else {
                NodeOutcome::Undecided
            }
        })
        .collect();
    let f_actual = driver.net.crashed_count() as u32;
    let ever_elected = driver.states.iter().filter(|s| s.elected).count() as u32;
    let (metrics, log) = driver.net.into_parts();
    Ok(CrashRun {
        states: driver.states,
        outcome,
        phases_run: params.phases(),
        phase_summaries: summaries,
        ever_elected,
        f_actual,
        monitors: driver.report,
        metrics,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::crash::{crash_strategy, CRASH_STRATEGIES};
    use crate::monitor::check_unique_strong;

    fn run(n: u32, strategy: &str, budget: usize, seed: u64, c: f64) -> CrashRun {
        let mut params = CrashParams::new(n, 4 * n as u64 * n as u64);
        params.election_constant = c;
        let ids = (0..n).map(|i| NodeId(3 * i + 7)).collect();
        let mut adv = crash_strategy(strategy, budget, seed).unwrap();
        let opts = CrashRunOptions { seed, budget, count_policy: CountPolicy::Sent, log_level: LogLevel::Summary };
        run_crash_protocol(&params, ids, adv.as_mut(), &opts).unwrap()
    }

    #[test]
    fn every_strategy_renames_uniquely() {
        for c in [256.0, 1.0] {
            for s in CRASH_STRATEGIES {
                for seed in 0..3 {
                    let r = run(32, s, 10, seed, c);
                    let v = check_unique_strong(&r.outcome, 32, 0);
                    assert!(v.holds, "{s} c={c} seed={seed}: {:?}", v.witness);
                    assert_eq!(r.monitors.deterministic_failures(), 0, "{s}: {:?}", r.monitors.failures);
                    assert!(r.metrics.conserved());
                    assert!(r.f_actual as usize <= 10);
                }
            }
        }
    }

    #[test]
    fn crash_free_run_keeps_everyone() {
        let r = run(16, "none", 0, 1, 256.0);
        assert!(r.outcome.iter().all(|o| matches!(o, NodeOutcome::Renamed(_))));
        assert_eq!(r.metrics.rounds_total, 3 * 3 * 4);
        assert_eq!(r.phase_summaries.len(), 12);
    }
}
