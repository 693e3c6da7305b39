//! The identity list `L_v ∈ {0,1}^N`, stored as its sorted set of ones.

use alloc::vec::Vec;

use crate::interval::Interval;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdentityList {
    ones: Vec<u32>,
}

impl IdentityList {
    pub fn new() -> Self {
        IdentityList { ones: Vec::new() }
    }

    pub fn from_ids<I: IntoIterator<Item = u32>>(ids: I) -> Self {
        let mut ones: Vec<u32> = ids.into_iter().collect();
        ones.sort_unstable();
        ones.dedup();
        IdentityList { ones }
    }

    pub fn ones(&self) -> &[u32] {
        &self.ones
    }

    pub fn count(&self) -> usize {
        self.ones.len()
    }

    pub fn get(&self, i: u32) -> bool {
        self.ones.binary_search(&i).is_ok()
    }

    pub fn set(&mut self, i: u32, bit: bool) {
        match (self.ones.binary_search(&i), bit) {
            (Err(k), true) => self.ones.insert(k, i),
            (Ok(k), false) => {
                self.ones.remove(k);
            }
            _ => {}
        }
    }

    fn range(&self, j: &Interval) -> (usize, usize) {
        (self.ones.partition_point(|x| *x < j.lo), self.ones.partition_point(|x| *x <= j.hi))
    }

    /// Ones inside `j`.
    pub fn segment(&self, j: &Interval) -> &[u32] {
        let (a, b) = self.range(j);
        &self.ones[a..b]
    }

    pub fn count_in(&self, j: &Interval) -> u32 {
        let (a, b) = self.range(j);
        (b - a) as u32
    }

    /// Replaces `L[j]` by `cnt` ones packed at the left end (capped at `|j|`).
    pub fn fill_leftmost(&mut self, j: &Interval, cnt: u32) {
        let cnt = cnt.min(j.len());
        let (a, b) = self.range(j);
        self.ones.splice(a..b, j.lo..j.lo + cnt);
    }

    /// Ones at positions `≤ id`.
    pub fn rank_at_or_before(&self, id: u32) -> u32 {
        self.ones.partition_point(|x| *x <= id) as u32
    }
}
