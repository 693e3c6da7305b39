//! Standalone harnesses for the Validator and Consensus contracts.
//!
//! Both drive the sub-protocol state machines directly with every correct
//! member seeing every other correct member, and let the caller script the
//! Byzantine members message by message.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::byz::validator::{validator_echo, validator_output};
use crate::byz::{ByzParams, ConsensusNode, Tally, Vote, VoteTally};

/// `pattern[b][v]`: what Byzantine `b` sends correct `v`; `None` is silence.
pub type Pattern<T> = Vec<Vec<Option<T>>>;

/// Both Validator rounds among `inputs.len()` correct members; returns `(same, out)` per member.
pub fn run_validator<T: Ord + Clone>(inputs: &[T], byz_init: &Pattern<T>, byz_echo: &Pattern<T>, p: &ByzParams) -> Vec<(bool, T)> {
    let g = inputs.len();
    let tally = |base: &[T], extra: &Pattern<T>, v: usize| {
        let mut t = Tally::new();
        for x in base {
            t.add(x);
        }
        for b in extra {
            if let Some(x) = &b[v] {
                t.add(x);
            }
        }
        t
    };
    let echoes: Vec<Option<T>> = (0..g).map(|v| validator_echo(&tally(inputs, byz_init, v), p)).collect();
    let sent: Vec<T> = echoes.into_iter().flatten().collect();
    (0..g).map(|v| validator_output(&tally(&sent, byz_echo, v), &inputs[v], p)).collect()
}

/// First violated clause of the Validator contract, if any.
pub fn validator_violation<T: Ord + Clone + core::fmt::Debug>(inputs: &[T], outs: &[(bool, T)]) -> Option<String> {
    for (v, (_, o)) in outs.iter().enumerate() {
        if !inputs.contains(o) {
            return Some(format!("validity (1): node {v} output {o:?}, no correct input"));
        }
    }
    if inputs.iter().all(|x| *x == inputs[0]) {
        if let Some((v, o)) = outs.iter().enumerate().find(|(_, o)| o.0 != true || o.1 != inputs[0]) {
            return Some(format!("validity (2): unanimous {:?} but node {v} got {o:?}", inputs[0]));
        }
    }
    if let Some(v) = outs.iter().position(|o| o.0) {
        if let Some(u) = outs.iter().position(|o| o.1 != outs[v].1) {
            return Some(format!("weak agreement: node {v} has same = 1 with {:?}, node {u} output {:?}", outs[v].1, outs[u].1));
        }
    }
    None
}

/// Byzantine message to one receiver in one consensus round.
const CHOICES: [Option<Vote>; 4] = [Some(Vote::Zero), Some(Vote::One), Some(Vote::Bottom), None];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConsensusCheck {
    pub final_states: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
}

/// Phase, step and used kings are shared by every correct node, so value,
/// pending vote and strength identify a configuration.
fn key(nodes: &[ConsensusNode]) -> Vec<(bool, Option<Vote>, bool)> {
    nodes.iter().map(|n| (n.output(), n.vote(), n.strong())).collect()
}

fn king_round(nodes: &[ConsensusNode], king: usize, byz: &[Option<Vote>]) -> Vec<ConsensusNode> {
    let g = nodes.len();
    let mut nodes = nodes.to_vec();
    for n in nodes.iter_mut() {
        n.set_king(Some(king));
    }
    let msg: Vec<Option<Vote>> = (0..g).map(|v| if king >= g { byz[v] } else { nodes[king].king_vote(king) }).collect();
    for (v, n) in nodes.iter_mut().enumerate() {
        n.receive_king(msg[v]);
    }
    nodes
}

/// Distinct final configurations over every Byzantine behaviour for a fixed
/// king sequence. Kings `≥ inputs.len()` are Byzantine.
/// Every per-receiver choice of `b` Byzantine nodes, as extra vote counts per receiver.
pub fn byzantine_vote_choices(g: usize, b: usize) -> Vec<Vec<[u8; 4]>> {
    let mut choices: BTreeSet<Vec<[u8; 4]>> = BTreeSet::new();
    for code in 0..4usize.pow((g * b) as u32) {
        let mut per: Vec<[u8; 4]> = vec![[0; 4]; g];
        for slot in 0..g * b {
            per[slot % g][(code >> (2 * slot)) & 3] += 1;
        }
        choices.insert(per);
    }
    choices.into_iter().collect()
}

pub fn consensus_finals(inputs: &[bool], kings: &[usize], choices: &[Vec<[u8; 4]>], p: &ByzParams) -> Vec<Vec<ConsensusNode>> {
    let g = inputs.len();
    let phases = p.consensus_phases();
    let mut frontier = vec![inputs.iter().map(|x| ConsensusNode::new(*x, phases)).collect::<Vec<_>>()];
    for &king in kings {
        for step in 0..3 {
            let mut next = Vec::new();
            let mut seen = BTreeSet::new();
            for s in &frontier {
                if step == 2 {
                    let byz_msgs: Vec<Vec<Option<Vote>>> = if king < g {
                        vec![vec![None; g]]
                    } else {
                        (0..4usize.pow(g as u32))
                            .map(|code| (0..g).map(|v| CHOICES[(code >> (2 * v)) & 3]).collect())
                            .collect()
                    };
                    for m in &byz_msgs {
                        let t = king_round(s, king, m);
                        if seen.insert(key(&t)) {
                            next.push(t);
                        }
                    }
                } else {
                    for per in choices {
                        let t = vote_round_counts(s, per, p);
                        if seen.insert(key(&t)) {
                            next.push(t);
                        }
                    }
                }
            }
            frontier = next;
        }
    }
    frontier
}

/// Voting round where receiver `v` gets `per[v][c]` extra votes of choice `c`.
fn vote_round_counts(nodes: &[ConsensusNode], per: &[[u8; 4]], p: &ByzParams) -> Vec<ConsensusNode> {
    let mut tally: VoteTally = [0; 3];
    for n in nodes {
        tally[n.vote().expect("voting round").code() as usize] += 1;
    }
    nodes
        .iter()
        .enumerate()
        .map(|(v, n)| {
            let mut t = tally;
            for (k, c) in t.iter_mut().enumerate() {
                *c += per[v][k] as u32;
            }
            let mut n = n.clone();
            n.receive_votes(&t, p);
            n
        })
        .collect()
}

/// Every input pattern of `g` correct members, every sequence of distinct
/// kings over all `g + b` members, every Byzantine message choice: checks
/// agreement and validity of the outputs.
pub fn consensus_model_check(g: usize, b: usize, p: &ByzParams) -> ConsensusCheck {
    let phases = p.consensus_phases() as usize;
    let members = g + b;
    let mut seqs: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..phases {
        let mut next = Vec::new();
        for s in &seqs {
            for k in 0..members {
                if !s.contains(&k) {
                    let mut t = s.clone();
                    t.push(k);
                    next.push(t);
                }
            }
        }
        seqs = next;
    }
    let choices = byzantine_vote_choices(g, b);
    let mut out = ConsensusCheck::default();
    for pattern in 0..(1u32 << g) {
        let inputs: Vec<bool> = (0..g).map(|v| pattern & (1 << v) != 0).collect();
        for kings in &seqs {
            for end in consensus_finals(&inputs, kings, &choices, p) {
                out.final_states += 1;
                let res: Vec<bool> = end.iter().map(|n| n.output()).collect();
                let bad = if !end.iter().all(|n| n.done()) {
                    Some(format!("not finished after {phases} phases"))
                } else if res.iter().any(|o| *o != res[0]) {
                    Some(format!("disagreement {res:?}"))
                } else if !inputs.contains(&res[0]) {
                    Some(format!("output {} is no correct input", res[0]))
                } else {
                    None
                };
                if let Some(w) = bad {
                    out.violations += 1;
                    out.first_violation.get_or_insert_with(|| format!("{w}; inputs {inputs:?}, kings {kings:?}"));
                }
            }
        }
    }
    out
}
