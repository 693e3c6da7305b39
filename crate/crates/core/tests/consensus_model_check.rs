//! Exhaustive check of the phase-king consensus at |G| = 4, |B| = 1, c_g = 4:
//! every input pattern, every sequence of distinct kings over all five
//! members, every per-receiver Byzantine message in every round.

use rename_core::byz::ByzParams;
use rename_core::monitor::contracts::consensus_model_check;

fn params(c_g: f64) -> ByzParams {
    let mut p = ByzParams::new(5, 125, 0.05, Some(1.0)).unwrap();
    p.c_g = c_g;
    p
}

#[test]
fn agreement_and_validity_hold_exhaustively() {
    let p = params(4.0);
    assert_eq!(p.consensus_phases(), 3);
    let r = consensus_model_check(4, 1, &p);
    assert!(r.final_states > 0);
    assert_eq!(r.violations, 0, "{:?}", r.first_violation);
}

#[test]
fn holds_at_the_derived_thresholds() {
    let p = ByzParams::new(5, 125, 0.05, Some(1.0)).unwrap();
    assert!(p.c_g > 3.0 && p.c_g < 4.0);
    let r = consensus_model_check(4, 1, &p);
    assert!(r.final_states > 0);
    assert_eq!(r.violations, 0, "{:?}", r.first_violation);
}

#[test]
fn search_finds_disagreement_below_the_thresholds() {
    // c_g = 2 breaks |B| < c_g/2; the same search must then expose a split
    let r = consensus_model_check(4, 1, &params(2.0));
    assert!(r.violations > 0);
}
