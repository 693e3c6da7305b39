use alloc::vec::Vec;

use fixedbitset::FixedBitSet;

use super::NodeIndex;

/// A fixed set of receivers over `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeGroup {
    bits: FixedBitSet,
    len: usize,
}

impl NodeGroup {
    pub fn empty(n: usize) -> Self {
        NodeGroup { bits: FixedBitSet::with_capacity(n), len: 0 }
    }

    pub fn full(n: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(n);
        bits.insert_range(..);
        NodeGroup { bits, len: n }
    }

    pub fn from_members<I: IntoIterator<Item = NodeIndex>>(n: usize, members: I) -> Self {
        let mut bits = FixedBitSet::with_capacity(n);
        for m in members {
            assert!(m < n, "group member {m} outside 0..{n}");
            bits.insert(m);
        }
        let len = bits.count_ones(..);
        NodeGroup { bits, len }
    }

    pub fn insert(&mut self, m: NodeIndex) {
        if !self.bits.put(m) {
            self.len += 1;
        }
    }

    pub fn contains(&self, m: NodeIndex) -> bool {
        self.bits.contains(m)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.bits.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeIndex> + '_ {
        self.bits.ones()
    }

    pub fn to_vec(&self) -> Vec<NodeIndex> {
        self.bits.ones().collect()
    }

    pub fn intersection_len(&self, other: &NodeGroup) -> usize {
        self.bits.intersection_count(&other.bits)
    }
}
