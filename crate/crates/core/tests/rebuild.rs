//! Scripted committee wipes: the re-election path of the crash protocol.

use rename_core::adversary::crash::{CrashAdversary, CrashObservation};
use rename_core::crash::{run_crash_protocol, CrashParams, CrashRun, CrashRunOptions};
use rename_core::monitor::LemmaTag;
use rename_core::net::{CountPolicy, CrashDecision, LogLevel, NodeId, NodeOutcome};

/// Crashes every live member in sub-round 3 of `phase`, delivering either all
/// or none of their responses.
struct Wipe {
    phase: u64,
    deliver: bool,
    wiped: usize,
}

impl CrashAdversary for Wipe {
    fn name(&self) -> &'static str {
        "wipe"
    }

    fn decide(&mut self, obs: &CrashObservation<'_>) -> CrashDecision {
        let mut d = CrashDecision::none();
        if obs.clock.phase == self.phase && obs.clock.sub_round == 3 {
            let members = obs.members();
            if !members.is_empty() && members.len() <= obs.budget_left && members.len() < obs.alive_count() {
                for m in members {
                    let to = if self.deliver { obs.receivers_of(m) } else { Vec::new() };
                    d.crash(m, to);
                    self.wiped += 1;
                }
            }
        }
        d
    }
}

fn run(n: u32, c: f64, seed: u64, adv: &mut Wipe) -> CrashRun {
    let mut params = CrashParams::new(n, 4 * n as u64 * n as u64);
    params.election_constant = c;
    let ids = (0..n).map(|i| NodeId(3 * i + 1)).collect();
    let opts = CrashRunOptions { seed, budget: n as usize - 1, count_policy: CountPolicy::Sent, log_level: LogLevel::Off };
    run_crash_protocol(&params, ids, adv, &opts).unwrap()
}

#[test]
fn wipe_before_responses_raises_every_survivor() {
    let mut hits = 0;
    for seed in 0..200 {
        let mut adv = Wipe { phase: 1, deliver: false, wiped: 0 };
        let r = run(8, 0.5, seed, &mut adv);
        assert!(r.outcome.iter().all(|o| o.new_id().is_some() || matches!(o, NodeOutcome::Crashed)));
        assert_eq!(r.monitors.deterministic_failures(), 0, "{:?}", r.monitors.failures);
        if adv.wiped == 0 {
            continue;
        }
        hits += 1;
        let p1 = r.phase_summaries.iter().find(|s| s.phase == 1).unwrap();
        assert!(p1.min_p >= 1, "seed {seed}: survivors kept p = {}", p1.min_p);
    }
    assert!(hits > 10, "only {hits} seeds had a wipeable committee");
}

#[test]
fn committee_gone_at_phase_end_raises_min_p() {
    let mut hits = 0;
    for seed in 0..200 {
        let mut adv = Wipe { phase: 1, deliver: true, wiped: 0 };
        let r = run(8, 0.5, seed, &mut adv);
        assert_eq!(r.monitors.deterministic_failures(), 0, "{:?}", r.monitors.failures);
        if adv.wiped == 0 {
            continue;
        }
        let p1 = r.phase_summaries.iter().find(|s| s.phase == 1).unwrap();
        let p2 = r.phase_summaries.iter().find(|s| s.phase == 2).unwrap();
        if p1.elected == 0 {
            hits += 1;
            assert!(p2.min_p > p1.min_p, "seed {seed}: {p1:?} -> {p2:?}");
            assert!(r.monitors.checks_of(LemmaTag::CrashRebuildCommittee) > 0);
        }
    }
    assert!(hits > 10, "only {hits} seeds ended phase 1 without a committee");
}
