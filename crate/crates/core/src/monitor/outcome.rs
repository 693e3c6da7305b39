use alloc::format;
use alloc::vec::Vec;

use super::{LemmaTag, MonitorVerdict};
use crate::net::{NodeId, NodeOutcome};

/// Distinct new ids within `[1, n]` over every renamed node.
///
/// Crashed and Byzantine nodes are skipped; an undecided survivor fails the check.
pub fn check_unique_strong(outcome: &[NodeOutcome], n: u32, round: u64) -> MonitorVerdict {
    let mut witness = None;
    let mut seen: Vec<(u32, usize)> = Vec::new();
    for (i, o) in outcome.iter().enumerate() {
        match o {
            NodeOutcome::Renamed(x) => {
                if *x == 0 || *x > n {
                    witness.get_or_insert_with(|| format!("node {i} got {x}, outside [1,{n}]"));
                }
                seen.push((*x, i));
            }
            NodeOutcome::Undecided => {
                witness.get_or_insert_with(|| format!("node {i} ended without a new id"));
            }
            NodeOutcome::Crashed | NodeOutcome::Byzantine => {}
        }
    }
    seen.sort_unstable();
    for w in seen.windows(2) {
        if w[0].0 == w[1].0 {
            witness.get_or_insert_with(|| format!("nodes {} and {} both got {}", w[0].1, w[1].1, w[0].0));
        }
    }
    MonitorVerdict { lemma: LemmaTag::UniqueStrong, round, holds: witness.is_none(), witness }
}

/// `id(u) < id(v) ⇒ nid(u) < nid(v)` over the given `(original, new)` pairs.
pub fn check_order_preserving(pairs: &[(NodeId, u32)], round: u64) -> MonitorVerdict {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    let mut witness = None;
    for w in sorted.windows(2) {
        if w[0].0 < w[1].0 && w[0].1 >= w[1].1 {
            witness = Some(format!("ids {} < {} but new ids {} >= {}", w[0].0, w[1].0, w[0].1, w[1].1));
            break;
        }
    }
    MonitorVerdict { lemma: LemmaTag::OrderPreserving, round, holds: witness.is_none(), witness }
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;

    fn renamed(xs: &[u32]) -> Vec<NodeOutcome> {
        xs.iter().map(|x| NodeOutcome::Renamed(*x)).collect()
    }

    #[test]
    fn unique_strong_examples() {
        assert!(check_unique_strong(&renamed(&[1, 2, 3, 4]), 4, 0).holds);
        let v = check_unique_strong(&renamed(&[1, 2, 2]), 4, 0);
        assert!(!v.holds);
        assert!(v.witness.unwrap().contains("both got 2"));
        assert!(!check_unique_strong(&renamed(&[0, 1, 2]), 4, 0).holds);
        assert!(!check_unique_strong(&renamed(&[1, 5]), 4, 0).holds);
        assert!(check_unique_strong(&[NodeOutcome::Crashed, NodeOutcome::Renamed(1)], 4, 0).holds);
        assert!(!check_unique_strong(&[NodeOutcome::Undecided], 4, 0).holds);
    }

    #[test]
    fn order_preserving_examples() {
        let p = vec![(NodeId(10), 1), (NodeId(20), 2), (NodeId(30), 3)];
        assert!(check_order_preserving(&p, 0).holds);
        assert!(!check_order_preserving(&[(NodeId(10), 2), (NodeId(20), 1)], 0).holds);
        assert!(check_order_preserving(&[(NodeId(10), 7)], 0).holds);
        assert!(check_order_preserving(&[], 0).holds);
    }
}
