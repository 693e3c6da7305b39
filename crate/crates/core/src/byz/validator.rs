//! Two-round Validator: strong validity plus weak agreement flagged by `same`.

use alloc::vec::Vec;

use super::ByzParams;

/// Multiset of received values. Small, so a flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tally<T> {
    entries: Vec<(T, u32)>,
}

impl<T> Default for Tally<T> {
    fn default() -> Self {
        Tally { entries: Vec::new() }
    }
}

impl<T: Ord + Clone> Tally<T> {
    pub fn new() -> Self {
        Tally::default()
    }

    pub fn add_n(&mut self, v: &T, k: u32) {
        if k == 0 {
            return;
        }
        match self.entries.iter_mut().find(|(x, _)| x == v) {
            Some((_, c)) => *c += k,
            None => self.entries.push((v.clone(), k)),
        }
    }

    pub fn add(&mut self, v: &T) {
        self.add_n(v, 1);
    }

    pub fn count(&self, v: &T) -> u32 {
        self.entries.iter().find(|(x, _)| x == v).map(|(_, c)| *c).unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.entries.iter().map(|(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most frequent value and the count of the runner-up; ties go to the smaller value.
    pub fn top_two(&self) -> Option<(&T, u32, u32)> {
        let mut best: Option<(&T, u32)> = None;
        let mut second = 0;
        for (v, c) in &self.entries {
            match best {
                None => best = Some((v, *c)),
                Some((bv, bc)) => {
                    if *c > bc || (*c == bc && v < bv) {
                        second = bc;
                        best = Some((v, *c));
                    } else {
                        second = second.max(*c);
                    }
                }
            }
        }
        best.map(|(v, c)| (v, c, second))
    }
}

/// ECHO value after the INIT round: the most frequent INIT if it reached `c_g`.
pub fn validator_echo<T: Ord + Clone>(inits: &Tally<T>, params: &ByzParams) -> Option<T> {
    inits.top_two().filter(|(_, c, _)| params.reaches(*c)).map(|(v, _, _)| v.clone())
}

/// `(same, out)` after the ECHO round.
pub fn validator_output<T: Ord + Clone>(echoes: &Tally<T>, input: &T, params: &ByzParams) -> (bool, T) {
    match echoes.top_two() {
        None => (false, input.clone()),
        Some((v1, c1, c2)) => {
            let out = if params.exceeds_half(c1) { v1.clone() } else { input.clone() };
            let same = params.exceeds_half(c1 - c2) && params.reaches(c1);
            (same, out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ByzParams {
        // c_g = 20 exactly: p0 such that 0.925·(2/3+0.05)·p0·n = 20.
        let mut p = ByzParams::new(29, 29 * 29 * 5, 0.05, Some(1.0)).unwrap();
        p.c_g = 20.0;
        p
    }

    #[test]
    fn top_two_tie_breaks_small() {
        let mut t = Tally::new();
        for v in [5, 3, 5, 3, 9] {
            t.add(&v);
        }
        assert_eq!(t.top_two(), Some((&3, 2, 2)));
        assert_eq!(t.total(), 5);
        assert_eq!(Tally::<u8>::new().top_two(), None);
    }

    #[test]
    fn unanimous_input_validates() {
        let p = params();
        let mut inits = Tally::new();
        inits.add_n(&7u32, 20);
        inits.add_n(&9u32, 9);
        assert_eq!(validator_echo(&inits, &p), Some(7));
        let mut echoes = Tally::new();
        echoes.add_n(&7u32, 20);
        echoes.add_n(&9u32, 9);
        assert_eq!(validator_output(&echoes, &7, &p), (true, 7));
    }

    #[test]
    fn below_threshold_keeps_input() {
        let p = params();
        let mut inits = Tally::new();
        inits.add_n(&7u32, 19);
        assert_eq!(validator_echo(&inits, &p), None);
        let mut echoes = Tally::new();
        echoes.add_n(&9u32, 10);
        assert_eq!(validator_output(&echoes, &7, &p), (false, 7));
        echoes.add(&9);
        assert_eq!(validator_output(&echoes, &7, &p), (false, 9));
    }
}
