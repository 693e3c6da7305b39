//! Thresholded binary phase-king consensus.
//!
//! Each phase takes three rounds: values, proposals (`⊥` when no value reached
//! `c_g`), then a king broadcast. A node holding `≥ c_g` proposals for `x`
//! is strong and ignores the king; `> c_g/2` proposals for `x` adopt `x`.
//! The king of a phase is the minimum-priority member of the node's view not
//! yet used as king in this instance, under fresh shared priorities per phase.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ByzParams;
use crate::net::rng::{mix64, DrawKind, SharedRandomness};
use crate::net::{NodeId, NodeIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vote {
    Zero,
    One,
    Bottom,
}

impl Vote {
    pub fn code(self) -> u64 {
        match self {
            Vote::Zero => 0,
            Vote::One => 1,
            Vote::Bottom => 2,
        }
    }

    pub fn from_code(c: u64) -> Option<Vote> {
        match c {
            0 => Some(Vote::Zero),
            1 => Some(Vote::One),
            2 => Some(Vote::Bottom),
            _ => None,
        }
    }

    pub fn from_bit(b: bool) -> Vote {
        if b {
            Vote::One
        } else {
            Vote::Zero
        }
    }

    pub fn bit(self) -> Option<bool> {
        match self {
            Vote::Zero => Some(false),
            Vote::One => Some(true),
            Vote::Bottom => None,
        }
    }
}

/// Received votes, indexed by `Vote::code`.
pub type VoteTally = [u32; 3];

/// Per-phase king priorities of one consensus instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KingSeed(pub u64);

impl KingSeed {
    pub fn draw(shared: &SharedRandomness, instance: u64, phase: u32) -> Self {
        KingSeed(shared.word(DrawKind::KingPriority, (instance << 20) | phase as u64, 0))
    }

    pub fn priority(self, id: NodeId) -> u64 {
        mix64(self.0 ^ id.0 as u64)
    }
}

/// Minimum `(priority, id)` over `view` minus `used`.
pub fn choose_king(view: &[NodeIndex], ids: &[NodeId], used: &[NodeIndex], seed: KingSeed) -> Option<NodeIndex> {
    view.iter()
        .copied()
        .filter(|v| !used.contains(v))
        .min_by_key(|v| (seed.priority(ids[*v]), ids[*v]))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsensusNode {
    pub x: bool,
    proposal: Vote,
    strong: bool,
    phase: u32,
    step: u8,
    phases: u32,
    used: Vec<NodeIndex>,
    king: Option<NodeIndex>,
}

impl ConsensusNode {
    pub fn new(input: bool, phases: u32) -> Self {
        ConsensusNode { x: input, proposal: Vote::Bottom, strong: false, phase: 0, step: 1, phases, used: Vec::new(), king: None }
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    /// Round within the phase, 1 to 3.
    pub fn step(&self) -> u8 {
        self.step
    }

    pub fn done(&self) -> bool {
        self.phase >= self.phases
    }

    pub fn output(&self) -> bool {
        self.x
    }

    pub fn strong(&self) -> bool {
        self.strong
    }

    pub fn used(&self) -> &[NodeIndex] {
        &self.used
    }

    pub fn king(&self) -> Option<NodeIndex> {
        self.king
    }

    /// Vote sent to the view in rounds 1 and 2.
    pub fn vote(&self) -> Option<Vote> {
        match self.step {
            1 => Some(Vote::from_bit(self.x)),
            2 => Some(self.proposal),
            _ => None,
        }
    }

    /// Fixes this phase's king (round 3) and marks it used.
    pub fn set_king(&mut self, king: Option<NodeIndex>) {
        debug_assert_eq!(self.step, 3);
        self.king = king;
        if let Some(k) = king {
            self.used.push(k);
        }
    }

    /// King message to broadcast if `me` is its own king this phase.
    pub fn king_vote(&self, me: NodeIndex) -> Option<Vote> {
        (self.step == 3 && self.king == Some(me)).then_some(Vote::from_bit(self.x))
    }

    pub fn receive_votes(&mut self, t: &VoteTally, params: &ByzParams) {
        let (c0, c1) = (t[0], t[1]);
        match self.step {
            1 => {
                self.proposal = match (params.reaches(c0), params.reaches(c1)) {
                    (true, true) => Vote::from_bit(c1 > c0),
                    (true, false) => Vote::Zero,
                    (false, true) => Vote::One,
                    (false, false) => Vote::Bottom,
                };
                self.step = 2;
            }
            2 => {
                let (best, d) = if c1 > c0 { (true, c1) } else { (false, c0) };
                if params.exceeds_half(d) {
                    self.x = best;
                }
                self.strong = params.exceeds_half(d) && params.reaches(d);
                self.step = 3;
            }
            _ => panic!("receive_votes in king round"),
        }
    }

    /// Round 3: `king` is the message from this node's king, if any arrived.
    pub fn receive_king(&mut self, king: Option<Vote>) {
        debug_assert_eq!(self.step, 3);
        if !self.strong {
            if let Some(v) = king {
                self.x = v.bit().unwrap_or(false);
            }
        }
        self.phase += 1;
        self.step = 1;
        self.king = None;
    }
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;

    fn params(c_g: f64) -> ByzParams {
        let mut p = ByzParams::new(8, 320, 0.05, Some(1.0)).unwrap();
        p.c_g = c_g;
        p
    }

    #[test]
    fn unanimous_one_persists() {
        let p = params(4.0);
        let mut v = ConsensusNode::new(true, 3);
        while !v.done() {
            v.receive_votes(&[1, 4, 0], &p);
            assert_eq!(v.vote(), Some(Vote::One));
            v.receive_votes(&[0, 4, 1], &p);
            assert!(v.strong());
            assert_eq!(v.vote(), None);
            v.set_king(Some(0));
            v.receive_king(Some(Vote::Zero));
        }
        assert!(v.output());
    }

    #[test]
    fn weak_node_follows_king() {
        let p = params(4.0);
        let mut v = ConsensusNode::new(true, 1);
        assert_eq!(v.vote(), Some(Vote::One));
        v.receive_votes(&[2, 3, 0], &p);
        assert_eq!(v.vote(), Some(Vote::Bottom));
        v.receive_votes(&[0, 0, 5], &p);
        assert!(!v.strong());
        v.set_king(Some(2));
        assert_eq!(v.king_vote(2), Some(Vote::One));
        assert_eq!(v.king_vote(1), None);
        v.receive_king(Some(Vote::Zero));
        assert!(!v.output() && v.done());
    }

    #[test]
    fn king_choice_skips_used() {
        let ids: Vec<NodeId> = (1..=5).map(NodeId).collect();
        let seed = KingSeed(99);
        let view = vec![0, 1, 2, 3, 4];
        let first = choose_king(&view, &ids, &[], seed).unwrap();
        let second = choose_king(&view, &ids, &[first], seed).unwrap();
        assert_ne!(first, second);
        assert_eq!(choose_king(&view, &ids, &view, seed), None);
    }
}
