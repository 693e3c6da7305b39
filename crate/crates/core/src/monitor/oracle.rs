//! Exhaustive crash-schedule oracle for tiny `n`.
//!
//! Ids are fixed to `1..=n`, one representative per order type. Every round
//! the adversary may crash any set of live nodes (within the budget) and pick,
//! for each victim, which surviving receivers still get its sends. Election
//! trials with probability strictly between 0 and 1 branch both ways. Distinct
//! states are expanded once per phase.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crash::{committee_action_with, plan_node_action, rank, CrashNodeState, CrashParams, RankFn, StatusReport};
use crate::net::NodeId;

pub const MAX_ORACLE_N: u32 = 6;

#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub n: u32,
    /// Crash budget; `n - 1` explores every schedule that leaves a survivor.
    pub budget: usize,
    pub election_constant: f64,
    pub rank_fn: RankFn,
    /// Cap on distinct phase-boundary states.
    pub state_cap: usize,
}

impl OracleConfig {
    pub fn new(n: u32) -> Self {
        OracleConfig {
            n,
            budget: n.saturating_sub(1) as usize,
            election_constant: crate::crash::DEFAULT_ELECTION_CONSTANT,
            rank_fn: rank,
            state_cap: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: u32,
    /// Distinct states expanded at phase boundaries.
    pub states: u64,
    /// Distinct final states checked.
    pub leaves: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
}

impl OracleReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("exhaustive search supports n <= {MAX_ORACLE_N}, got {0}")]
    TooLarge(u32),
    #[error("state cap of {cap} exceeded")]
    BudgetExceeded { cap: usize },
}

type Mask = u16;

fn bits(m: Mask) -> impl Iterator<Item = usize> {
    (0..16).filter(move |i| m & (1 << i) != 0)
}

/// Every choice of victims (within `budget_left`) and, per victim, the subset
/// of its receivers among the survivors that still get its sends.
fn schedules(live: Mask, budget_left: usize, receivers: &[Mask]) -> Vec<(Mask, Vec<Mask>)> {
    let mut out = Vec::new();
    let mut victims: Mask = 0;
    loop {
        // subsets of `live`, in increasing order
        if (victims.count_ones() as usize) <= budget_left && victims != live {
            let survivors = live & !victims;
            let vs: Vec<usize> = bits(victims).collect();
            let mut choice: Vec<Mask> = vec![0; vs.len()];
            loop {
                let mut delivered = vec![0 as Mask; receivers.len()];
                for (k, &v) in vs.iter().enumerate() {
                    delivered[v] = choice[k];
                }
                out.push((victims, delivered));
                // next combination of per-victim subsets
                let mut k = 0;
                loop {
                    if k == vs.len() {
                        break;
                    }
                    let universe = receivers[vs[k]] & survivors;
                    // next subset of `universe` after choice[k]
                    let next = (choice[k].wrapping_sub(universe)) & universe;
                    if next == 0 {
                        choice[k] = 0;
                        k += 1;
                    } else {
                        choice[k] = next;
                        break;
                    }
                }
                if k == vs.len() {
                    break;
                }
            }
        }
        if victims == live {
            break;
        }
        victims = (victims.wrapping_sub(live)) & live;
    }
    out
}

struct Search<'a> {
    cfg: &'a OracleConfig,
    params: CrashParams,
    seen: BTreeSet<(u32, Vec<CrashNodeState>)>,
    leaves: BTreeSet<Vec<CrashNodeState>>,
    report: OracleReport,
}

impl Search<'_> {
    fn n(&self) -> usize {
        self.cfg.n as usize
    }

    fn live(states: &[CrashNodeState]) -> Mask {
        states.iter().enumerate().filter(|(_, s)| !s.crashed).fold(0, |m, (i, _)| m | (1 << i))
    }

    fn budget_left(&self, states: &[CrashNodeState]) -> usize {
        self.cfg.budget.saturating_sub(states.iter().filter(|s| s.crashed).count())
    }

    fn check_leaf(&mut self, states: &[CrashNodeState]) {
        if !self.leaves.insert(states.to_vec()) {
            return;
        }
        self.report.leaves += 1;
        let n = self.cfg.n;
        let mut ids: Vec<u32> = Vec::new();
        let mut problem = None;
        for (i, s) in states.iter().enumerate() {
            if s.crashed {
                continue;
            }
            if !s.decided() {
                problem.get_or_insert_with(|| format!("node {i} undecided with {:?}", s.interval));
            } else if s.interval.lo == 0 || s.interval.lo > n {
                problem.get_or_insert_with(|| format!("node {i} got {} outside [1,{n}]", s.interval.lo));
            }
            ids.push(s.interval.lo);
        }
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            problem.get_or_insert_with(|| format!("duplicate new ids {ids:?}"));
        }
        if let Some(p) = problem {
            self.report.violations += 1;
            self.report.first_violation.get_or_insert(format!("{p}; final states {states:?}"));
        }
    }

    fn phase(&mut self, k: u32, states: Vec<CrashNodeState>) -> Result<(), OracleError> {
        if k > self.params.phases() {
            self.check_leaf(&states);
            return Ok(());
        }
        if !self.seen.insert((k, states.clone())) {
            return Ok(());
        }
        self.report.states += 1;
        if self.seen.len() > self.cfg.state_cap {
            return Err(OracleError::BudgetExceeded { cap: self.cfg.state_cap });
        }
        let n = self.n();
        let all: Mask = (1 << n) - 1;

        // round 1: elected nodes notify everyone
        let live = Self::live(&states);
        let senders: Vec<Mask> = (0..n).map(|v| if states[v].elected && live & (1 << v) != 0 { all } else { 0 }).collect();
        let mut outcomes1 = BTreeSet::new();
        for (victims, delivered) in schedules(live, self.budget_left(&states), &senders) {
            let survivors = live & !victims;
            let mut heard = vec![0 as Mask; n];
            for r in bits(survivors) {
                for v in 0..n {
                    let got = if victims & (1 << v) != 0 { delivered[v] } else { senders[v] };
                    if got & (1 << r) != 0 {
                        heard[r] |= 1 << v;
                    }
                }
            }
            outcomes1.insert((victims, heard));
        }
        for (victims, heard) in outcomes1 {
            let mut s1 = states.clone();
            for v in bits(victims) {
                s1[v].crashed = true;
            }
            self.round2(k, s1, heard)?;
        }
        Ok(())
    }

    fn round2(&mut self, k: u32, states: Vec<CrashNodeState>, heard: Vec<Mask>) -> Result<(), OracleError> {
        let n = self.n();
        let live = Self::live(&states);
        let sends: Vec<Mask> = (0..n)
            .map(|v| {
                let quiet = self.params.early_exit && states[v].decided();
                if live & (1 << v) != 0 && !quiet { heard[v] } else { 0 }
            })
            .collect();
        let mut outcomes = BTreeSet::new();
        for (victims, delivered) in schedules(live, self.budget_left(&states), &sends) {
            let survivors = live & !victims;
            // per surviving member: who reported to it
            let mut got = vec![0 as Mask; n];
            for m in bits(survivors) {
                if !states[m].elected {
                    continue;
                }
                for v in 0..n {
                    let reach = if victims & (1 << v) != 0 { delivered[v] } else { sends[v] };
                    if reach & (1 << m) != 0 {
                        got[m] |= 1 << v;
                    }
                }
            }
            outcomes.insert((victims, got));
        }
        for (victims, got) in outcomes {
            let mut s2 = states.clone();
            for v in bits(victims) {
                s2[v].crashed = true;
            }
            for m in 0..n {
                if got[m] != 0 {
                    s2[m].exponent = bits(got[m]).map(|v| states[v].exponent).max().expect("non-empty");
                }
            }
            let reports: Vec<Vec<StatusReport>> =
                (0..n).map(|m| bits(got[m]).map(|v| states[v].report()).collect()).collect();
            self.round3(k, s2, got, reports)?;
        }
        Ok(())
    }

    fn round3(
        &mut self,
        k: u32,
        states: Vec<CrashNodeState>,
        got: Vec<Mask>,
        reports: Vec<Vec<StatusReport>>,
    ) -> Result<(), OracleError> {
        let n = self.n();
        let live = Self::live(&states);
        let responses: Vec<Vec<crate::crash::CommitteeResponse>> = (0..n)
            .map(|m| {
                if live & (1 << m) != 0 && got[m] != 0 {
                    committee_action_with(&reports[m], states[m].exponent, self.cfg.rank_fn)
                } else {
                    Vec::new()
                }
            })
            .collect();
        let sends: Vec<Mask> = (0..n).map(|m| if responses[m].is_empty() { 0 } else { got[m] }).collect();
        let mut outcomes = BTreeSet::new();
        for (victims, delivered) in schedules(live, self.budget_left(&states), &sends) {
            let survivors = live & !victims;
            let mut next = states.clone();
            for v in bits(victims) {
                next[v].crashed = true;
            }
            let mut trials: Vec<(usize, f64)> = Vec::new();
            for v in bits(survivors) {
                let mut r: Vec<crate::crash::CommitteeResponse> = Vec::new();
                for m in 0..n {
                    let reach = if victims & (1 << m) != 0 { delivered[m] } else { sends[m] };
                    if reach & (1 << v) != 0 {
                        r.extend(responses[m].iter().copied().filter(|x| x.id == states[v].id));
                    }
                }
                r.sort_unstable();
                r.dedup();
                if let Some(q) = plan_node_action(&mut next[v], &r, &self.params).election_trial {
                    trials.push((v, q));
                }
            }
            for realised in elections(&next, &trials) {
                outcomes.insert(realised);
            }
        }
        for s in outcomes {
            self.phase(k + 1, s)?;
        }
        Ok(())
    }
}

/// Every realisation of the pending election trials.
fn elections(states: &[CrashNodeState], trials: &[(usize, f64)]) -> Vec<Vec<CrashNodeState>> {
    let mut out = vec![states.to_vec()];
    for &(v, q) in trials {
        if q >= 1.0 {
            for s in &mut out {
                s[v].elected = true;
            }
        } else if q > 0.0 {
            let mut won = out.clone();
            for s in &mut won {
                s[v].elected = true;
            }
            out.extend(won);
        }
    }
    out
}

/// Explores every crash schedule and election outcome of the crash protocol
/// on ids `1..=n`.
pub fn exhaustive_crash_oracle(cfg: &OracleConfig) -> Result<OracleReport, OracleError> {
    if cfg.n > MAX_ORACLE_N || cfg.n == 0 {
        return Err(OracleError::TooLarge(cfg.n));
    }
    let mut params = CrashParams::new(cfg.n, cfg.n as u64);
    params.election_constant = cfg.election_constant;
    let fresh: Vec<CrashNodeState> = (1..=cfg.n).map(|i| CrashNodeState::fresh(NodeId(i), cfg.n)).collect();
    let q0 = params.election_probability(0);
    let trials: Vec<(usize, f64)> = (0..cfg.n as usize).map(|v| (v, q0)).collect();
    let mut search = Search {
        cfg,
        params,
        seen: BTreeSet::new(),
        leaves: BTreeSet::new(),
        report: OracleReport { n: cfg.n, ..Default::default() },
    };
    let starts: BTreeSet<Vec<CrashNodeState>> = elections(&fresh, &trials).into_iter().collect();
    for s in starts {
        search.phase(1, s)?;
    }
    Ok(search.report)
}
