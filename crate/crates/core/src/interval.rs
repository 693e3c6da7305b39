//! Closed integer intervals and their halving tree.

use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum IntervalError {
    #[error("interval [{lo}, {hi}] has a single element and cannot be halved")]
    DegenerateInterval { lo: u32, hi: u32 },
    #[error("interval bounds out of order: [{lo}, {hi}]")]
    Inverted { lo: u32, hi: u32 },
}

/// `[lo, hi]`, both ends inclusive.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub fn new(lo: u32, hi: u32) -> Result<Self, IntervalError> {
        if lo > hi {
            return Err(IntervalError::Inverted { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub const fn root(n: u32) -> Self {
        Interval { lo: 1, hi: n }
    }

    pub const fn singleton(x: u32) -> Self {
        Interval { lo: x, hi: x }
    }

    pub const fn len(&self) -> u32 {
        self.hi - self.lo + 1
    }

    pub const fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub const fn contains(&self, x: u32) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub const fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub const fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    const fn mid(&self) -> u32 {
        // Avoids overflow near u32::MAX.
        self.lo + (self.hi - self.lo) / 2
    }

    /// Left half `[lo, ⌊(lo+hi)/2⌋]`.
    pub fn bot(&self) -> Result<Interval, IntervalError> {
        if self.is_singleton() {
            return Err(IntervalError::DegenerateInterval { lo: self.lo, hi: self.hi });
        }
        Ok(Interval { lo: self.lo, hi: self.mid() })
    }

    /// Right half `[⌊(lo+hi)/2⌋+1, hi]`.
    pub fn top(&self) -> Result<Interval, IntervalError> {
        if self.is_singleton() {
            return Err(IntervalError::DegenerateInterval { lo: self.lo, hi: self.hi });
        }
        Ok(Interval { lo: self.mid() + 1, hi: self.hi })
    }

    /// Whether `self` is reachable from `root` by repeated bot/top.
    pub fn is_tree_node_of(&self, root: &Interval) -> bool {
        let mut cur = *root;
        loop {
            if cur == *self {
                return true;
            }
            if !self.is_subset_of(&cur) || cur.is_singleton() {
                return false;
            }
            let b = cur.bot().expect("non-singleton");
            cur = if self.is_subset_of(&b) { b } else { cur.top().expect("non-singleton") };
        }
    }

    /// Depth of `self` in the halving tree rooted at `root`, if it is a node of it.
    pub fn tree_depth(&self, root: &Interval) -> Option<u32> {
        let mut cur = *root;
        let mut depth = 0;
        loop {
            if cur == *self {
                return Some(depth);
            }
            if !self.is_subset_of(&cur) || cur.is_singleton() {
                return None;
            }
            let b = cur.bot().expect("non-singleton");
            cur = if self.is_subset_of(&b) { b } else { cur.top().expect("non-singleton") };
            depth += 1;
        }
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: u32, hi: u32) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn bot_examples() {
        assert_eq!(iv(1, 8).bot().unwrap(), iv(1, 4));
        assert_eq!(iv(1, 5).bot().unwrap(), iv(1, 3));
        assert_eq!(iv(3, 4).bot().unwrap(), iv(3, 3));
    }

    #[test]
    fn top_examples() {
        assert_eq!(iv(1, 8).top().unwrap(), iv(5, 8));
        assert_eq!(iv(1, 5).top().unwrap(), iv(4, 5));
    }

    #[test]
    fn singleton_cannot_halve() {
        assert_eq!(iv(3, 3).bot(), Err(IntervalError::DegenerateInterval { lo: 3, hi: 3 }));
        assert!(iv(3, 3).top().is_err());
    }

    #[test]
    fn inverted_rejected() {
        assert!(Interval::new(4, 3).is_err());
    }

    #[test]
    fn tree_membership() {
        let root = iv(1, 5);
        assert!(iv(4, 5).is_tree_node_of(&root));
        assert!(iv(3, 3).is_tree_node_of(&root));
        assert!(!iv(2, 4).is_tree_node_of(&root));
        assert_eq!(iv(3, 3).tree_depth(&root), Some(2));
        assert_eq!(iv(2, 2).tree_depth(&root), Some(3));
        assert_eq!(iv(1, 1).tree_depth(&root), Some(3));
    }
}
