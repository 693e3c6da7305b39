use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{LemmaTag, MonitorReport};
use crate::crash::{CrashNodeState, CrashParams};
use crate::interval::Interval;
use crate::math::{ceil_log2, log2};

/// Finds a live interval holding more live nodes than it has values.
///
/// Counts, for every distinct interval `J`, the intervals `I ⊆ J`.
pub fn check_processor_less_interval(intervals: &[Interval]) -> Option<String> {
    let mut sorted: Vec<(u32, u32)> = intervals.iter().map(|i| (i.lo, i.hi)).collect();
    sorted.sort_unstable();
    let mut distinct = sorted.clone();
    distinct.dedup();
    for &(lo, hi) in &distinct {
        let start = sorted.partition_point(|s| s.0 < lo);
        let inside = sorted[start..].iter().take_while(|s| s.0 <= hi).filter(|s| s.1 <= hi).count();
        let size = (hi - lo + 1) as usize;
        if inside > size {
            return Some(format!("{inside} live nodes inside [{lo},{hi}] of size {size}"));
        }
    }
    None
}

#[derive(Clone, Copy, Debug)]
struct PhaseStats {
    min_depth_undecided: Option<u32>,
    min_p: u32,
    max_p: u32,
    any_elected: bool,
}

fn stats(states: &[CrashNodeState]) -> PhaseStats {
    let live = || states.iter().filter(|s| !s.crashed);
    PhaseStats {
        min_depth_undecided: live().filter(|s| !s.decided()).map(|s| s.depth).min(),
        min_p: live().map(|s| s.exponent).min().unwrap_or(0),
        max_p: live().map(|s| s.exponent).max().unwrap_or(0),
        any_elected: live().any(|s| s.elected),
    }
}

/// Lemma monitors of the crash protocol, fed ground-truth snapshots.
pub struct CrashMonitor {
    root: Interval,
    log_n: u32,
    phases: u32,
    band_constant: f64,
    prev_end: PhaseStats,
    elected_at_start: Vec<usize>,
    prev: Vec<CrashNodeState>,
    ever_elected: Vec<bool>,
}

impl CrashMonitor {
    pub const COVERS: [LemmaTag; 7] = [
        LemmaTag::NoCrashIncreasingHeight,
        LemmaTag::ProcessorLessInterval,
        LemmaTag::CrashRebuildCommittee,
        LemmaTag::BoundedDifferenceK,
        LemmaTag::CrashTermination,
        LemmaTag::Monotonicity,
        LemmaTag::BoundedCommitteeUpper,
    ];

    /// Starts from the post-initialisation states (phase 0).
    pub fn new(params: &CrashParams, initial: &[CrashNodeState], report: &mut MonitorReport) -> Self {
        for t in Self::COVERS {
            report.register(t);
        }
        let log_n = ceil_log2(params.n as u64);
        let m = CrashMonitor {
            root: Interval::root(params.n),
            log_n,
            phases: params.phases(),
            // Chernoff band: at most 3x the mean 2·C·2^p·log n of ever-elected nodes
            band_constant: 6.0 * params.election_constant * log2(params.n as f64),
            prev_end: stats(initial),
            elected_at_start: Vec::new(),
            prev: initial.to_vec(),
            ever_elected: initial.iter().map(|s| s.elected).collect(),
        };
        let s = m.prev_end;
        report.record(LemmaTag::BoundedDifferenceK, 0, s.max_p <= s.min_p + 1, || {
            format!("initial p range [{}, {}]", s.min_p, s.max_p)
        });
        m
    }

    pub fn phase_start(&mut self, states: &[CrashNodeState]) {
        self.elected_at_start = states.iter().enumerate().filter(|(_, s)| s.elected && !s.crashed).map(|(i, _)| i).collect();
    }

    /// Checks run at the end of every round.
    pub fn round_end(&mut self, round: u64, states: &[CrashNodeState], report: &mut MonitorReport) {
        let live: Vec<Interval> = states.iter().filter(|s| !s.crashed).map(|s| s.interval).collect();
        let w = check_processor_less_interval(&live);
        report.record(LemmaTag::ProcessorLessInterval, round, w.is_none(), || w.clone().unwrap_or_default());

        let mut bad = None;
        for (i, (old, new)) in self.prev.iter().zip(states).enumerate() {
            if new.crashed {
                continue;
            }
            if new.depth < old.depth || new.exponent < old.exponent {
                bad = Some(format!("node {i}: (d,p) went from ({},{}) to ({},{})", old.depth, old.exponent, new.depth, new.exponent));
            } else if old.interval.is_singleton() && new.interval != old.interval {
                bad = Some(format!("node {i}: decided interval {} changed to {}", old.interval, new.interval));
            } else if old.elected && !new.elected {
                bad = Some(format!("node {i} lost its elected flag"));
            } else if new.interval != old.interval
                && (new.interval.tree_depth(&self.root) != Some(new.depth) || !new.interval.is_subset_of(&old.interval))
            {
                bad = Some(format!("node {i}: interval {} at depth {} is not a child of {}", new.interval, new.depth, old.interval));
            }
            if bad.is_some() {
                break;
            }
        }
        report.record(LemmaTag::Monotonicity, round, bad.is_none(), || bad.clone().unwrap_or_default());
        for (e, s) in self.ever_elected.iter_mut().zip(states) {
            *e |= s.elected;
        }
        self.prev.clear();
        self.prev.extend_from_slice(states);
    }

    pub fn phase_end(&mut self, phase: u32, round: u64, states: &[CrashNodeState], report: &mut MonitorReport) {
        let cur = stats(states);
        let prev = self.prev_end;

        let survivor = self.elected_at_start.iter().any(|&i| !states[i].crashed);
        if let (Some(d_prev), true) = (prev.min_depth_undecided, survivor) {
            if d_prev <= self.log_n {
                let ok = cur.min_depth_undecided.is_none_or(|d| d > d_prev);
                report.record(LemmaTag::NoCrashIncreasingHeight, round, ok, || {
                    format!("phase {phase}: min undecided depth {:?} after {d_prev} with a surviving member", cur.min_depth_undecided)
                });
            }
        }

        if !prev.any_elected {
            let ok = cur.min_p > prev.min_p;
            report.record(LemmaTag::CrashRebuildCommittee, round, ok, || {
                format!("phase {phase}: no live member before, min p stayed {} -> {}", prev.min_p, cur.min_p)
            });
        }

        report.record(LemmaTag::BoundedDifferenceK, round, cur.max_p <= cur.min_p + 1, || {
            format!("phase {phase}: p range [{}, {}]", cur.min_p, cur.max_p)
        });

        let ever = self.ever_elected.iter().filter(|e| **e).count() as f64;
        let p_hat = states.iter().map(|s| s.exponent).max().unwrap_or(0);
        let bound = (self.band_constant * libm::pow(2.0, p_hat as f64)).min(states.len() as f64);
        report.record(LemmaTag::BoundedCommitteeUpper, round, ever <= bound, || {
            format!("phase {phase}: {ever} ever elected, band {bound}")
        });

        self.prev_end = cur;
    }

    /// Termination after the last phase: every live node holds a single value.
    pub fn finish(&mut self, phases_run: u32, round: u64, states: &[CrashNodeState], report: &mut MonitorReport) {
        let undecided = states.iter().filter(|s| !s.crashed && !s.decided()).count();
        let ok = undecided == 0 && phases_run == self.phases;
        report.record(LemmaTag::CrashTermination, round, ok, || {
            format!("{undecided} live nodes undecided after {phases_run} of {} phases", self.phases)
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: u32, hi: u32) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn processor_less_interval_detects_overflow() {
        assert!(check_processor_less_interval(&[iv(1, 2), iv(1, 2), iv(3, 4)]).is_none());
        assert!(check_processor_less_interval(&[iv(1, 2), iv(1, 1), iv(2, 2)]).is_some());
        assert!(check_processor_less_interval(&[iv(1, 1), iv(1, 1)]).is_some());
        assert!(check_processor_less_interval(&[iv(1, 4), iv(1, 2), iv(1, 1), iv(3, 3)]).is_none());
    }
}
