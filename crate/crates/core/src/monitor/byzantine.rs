use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;

use super::outcome::check_order_preserving;
use super::{LemmaTag, MonitorReport};
use crate::byz::{ByzParams, CommitteeStats, IdentityList};
use crate::interval::Interval;
use crate::math::log2;
use crate::net::{NodeGroup, NodeId, NodeIndex};

/// Work state of one correct committee member at an iteration boundary.
pub struct MemberSnapshot<'a> {
    pub node: NodeIndex,
    pub stack: &'a [Interval],
    pub processed: &'a [Interval],
    pub dirty: &'a [Interval],
    pub list: &'a IdentityList,
    pub iterations: u64,
}

pub struct IterationSnapshot<'a> {
    pub round: u64,
    pub members: &'a [MemberSnapshot<'a>],
}

pub struct ByzMonitor {
    params: ByzParams,
    /// Every original id, sorted.
    all_ids: Vec<u32>,
    correct_ids: Vec<u32>,
    f: usize,
    budget: usize,
    stats: CommitteeStats,
    /// Prefix of the processed list already checked.
    checked: usize,
}

fn count_in(sorted: &[u32], j: &Interval) -> usize {
    sorted.partition_point(|x| *x <= j.hi) - sorted.partition_point(|x| *x < j.lo)
}

fn in_range<'s>(sorted: &'s [u32], j: &Interval) -> &'s [u32] {
    &sorted[sorted.partition_point(|x| *x < j.lo)..sorted.partition_point(|x| *x <= j.hi)]
}

/// `J ∪ Ĵ` tiles `[1, big_n]` without overlap.
fn partitions(stack: &[Interval], processed: &[Interval], big_n: u32) -> Result<(), alloc::string::String> {
    let mut all: Vec<Interval> = stack.iter().chain(processed).copied().collect();
    all.sort_unstable();
    let mut next = 1u32;
    for j in &all {
        if j.lo != next {
            return Err(format!("gap or overlap at {} (next interval {:?})", next, j));
        }
        next = j.hi + 1;
    }
    if next != big_n + 1 {
        return Err(format!("cover ends at {} instead of {}", next - 1, big_n));
    }
    Ok(())
}

fn same_set(a: &[Interval], b: &[Interval]) -> bool {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_unstable();
    y.sort_unstable();
    x == y
}

impl ByzMonitor {
    pub fn new(params: &ByzParams, ids: &[NodeId], byzantine: &[NodeIndex], budget: usize, report: &mut MonitorReport) -> Self {
        for t in [
            LemmaTag::ViewContainment,
            LemmaTag::LockstepWorkState,
            LemmaTag::IterationBound,
            LemmaTag::CleanMajority,
            LemmaTag::CountConsensus,
            LemmaTag::CommitteeAnnouncement,
            LemmaTag::BudgetCompliance,
            LemmaTag::OrderPreserving,
        ] {
            report.register(t);
        }
        let mut all_ids: Vec<u32> = ids.iter().map(|i| i.0).collect();
        all_ids.sort_unstable();
        let mut correct_ids: Vec<u32> =
            ids.iter().enumerate().filter(|(v, _)| !byzantine.contains(v)).map(|(_, i)| i.0).collect();
        correct_ids.sort_unstable();
        ByzMonitor {
            params: *params,
            all_ids,
            correct_ids,
            f: byzantine.len(),
            budget,
            stats: CommitteeStats::default(),
            checked: 0,
        }
    }

    pub fn committee_stats(&self) -> CommitteeStats {
        self.stats
    }

    /// After the ELECT round. `views[v]` is `None` exactly for corrupted `v`.
    pub fn committee(
        &mut self,
        round: u64,
        correct_members: &[NodeIndex],
        byzantine_members: u32,
        views: &[Option<Rc<NodeGroup>>],
        report: &mut MonitorReport,
    ) {
        let g = correct_members.len() as u32;
        let p = &self.params;
        let within = p.reaches(g) && (g as f64) <= p.c_hat_g && (byzantine_members as f64) < p.c_g / 2.0;
        self.stats = CommitteeStats { correct: g, byzantine: byzantine_members, within_thresholds: within };
        report.record(LemmaTag::CommitteeAnnouncement, round, within, || {
            format!("|G| = {g}, |B| = {byzantine_members}, c_g = {:.2}, c_hat_g = {:.2}", p.c_g, p.c_hat_g)
        });
        let mut missing = None;
        'outer: for (v, view) in views.iter().enumerate() {
            let Some(view) = view else { continue };
            for &m in correct_members {
                if !view.contains(m) {
                    missing = Some((v, m));
                    break 'outer;
                }
            }
        }
        report.record(LemmaTag::ViewContainment, round, missing.is_none(), || {
            let (v, m) = missing.expect("failure");
            format!("member {m} missing from the view of node {v}")
        });
    }

    pub fn iteration_boundary(&mut self, snap: &IterationSnapshot<'_>, report: &mut MonitorReport) {
        let round = snap.round;
        let Some(first) = snap.members.first() else { return };

        let mut witness = None;
        for m in &snap.members[1..] {
            if m.stack != first.stack {
                witness = Some(format!("stack of member {} differs from member {}", m.node, first.node));
                break;
            }
            let same = m.processed.len() == first.processed.len()
                && (m.processed[self.checked.min(m.processed.len())..]
                    == first.processed[self.checked.min(first.processed.len())..]
                    || same_set(m.processed, first.processed));
            if !same {
                witness = Some(format!("processed set of member {} differs from member {}", m.node, first.node));
                break;
            }
        }
        if witness.is_none() {
            witness = partitions(first.stack, first.processed, self.params.big_n as u32).err();
        }
        report.record(LemmaTag::LockstepWorkState, round, witness.is_none(), || witness.clone().unwrap_or_default());

        let start = self.checked.min(first.processed.len());
        for j in &first.processed[start..] {
            self.check_interval(round, j, snap.members, report);
        }
        self.checked = first.processed.len();
    }

    fn check_interval(&self, round: u64, j: &Interval, members: &[MemberSnapshot<'_>], report: &mut MonitorReport) {
        let truth = count_in(&self.all_ids, j);
        let c0 = members[0].list.count_in(j);
        let agree = members.iter().all(|m| m.list.count_in(j) == c0);
        report.record(LemmaTag::CountConsensus, round, agree && c0 as usize <= truth, || {
            let counts: Vec<u32> = members.iter().map(|m| m.list.count_in(j)).collect();
            format!("counts on {j:?}: {counts:?}, true population {truth}")
        });

        let mut groups: Vec<(&[u32], u32)> = Vec::new();
        for m in members {
            if m.dirty.contains(j) {
                continue;
            }
            let seg = m.list.segment(j);
            match groups.iter_mut().find(|(s, _)| *s == seg) {
                Some((_, c)) => *c += 1,
                None => groups.push((seg, 1)),
            }
        }
        let best = groups.iter().max_by_key(|(_, c)| *c).copied();
        let correct = in_range(&self.correct_ids, j);
        let holds = match best {
            Some((seg, c)) => {
                c as f64 >= self.params.c_g / 2.0 && correct.iter().all(|x| seg.binary_search(x).is_ok())
            }
            None => false,
        };
        report.record(LemmaTag::CleanMajority, round, holds, || {
            format!(
                "{j:?}: largest clean agreeing group {} of {} members, needs {:.1}",
                best.map_or(0, |b| b.1),
                members.len(),
                self.params.c_g / 2.0
            )
        });
    }

    pub fn finish(&mut self, round: u64, iterations: u64, renamed: &[(NodeId, u32)], report: &mut MonitorReport) {
        let bound = 4.0 * self.f.max(1) as f64 * log2(self.params.big_n as f64);
        report.record(LemmaTag::IterationBound, round, iterations as f64 <= bound, || {
            format!("{iterations} iterations, bound {bound:.1}")
        });
        let f = self.f;
        let budget = self.budget;
        report.record(LemmaTag::BudgetCompliance, round, f <= budget, || format!("{f} corrupted nodes, budget {budget}"));
        let v = check_order_preserving(renamed, round);
        report.record(LemmaTag::OrderPreserving, round, v.holds, || v.witness.clone().unwrap_or_default());
    }
}
