//! Validator contract at |G| = 20, |B| = 9 with the `ByzParams` thresholds of
//! a 29-node committee (c_g ≈ 19.2): validity (out is a correct input),
//! unanimity gives (1, x), and same = 1 forces agreement.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rename_core::adversary::byzantine::equivocating_echo;
use rename_core::byz::{ByzParams, Fingerprint};
use rename_core::monitor::contracts::{run_validator as run, validator_violation as violations, Pattern};

const G: usize = 20;
const B: usize = 9;

fn params() -> ByzParams {
    ByzParams::new((G + B) as u32, 5 * 29 * 29, 0.05, Some(1.0)).unwrap()
}

fn pattern(values: u8) -> impl Strategy<Value = Pattern<u8>> {
    prop::collection::vec(prop::collection::vec(prop::option::weighted(0.8, 0..values), G), B)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_adversarial_patterns(
        inputs in prop_oneof![
            prop::collection::vec(0u8..3, G),
            (0u8..3).prop_map(|x| vec![x; G]),
            (0usize..=G, 0u8..2).prop_map(|(k, x)| (0..G).map(|i| if i < k { x } else { 1 - x }).collect()),
        ],
        byz_init in pattern(5),
        byz_echo in pattern(5),
    ) {
        let outs = run(&inputs, &byz_init, &byz_echo, &params());
        let bad = violations(&inputs, &outs);
        prop_assert!(bad.is_none(), "{}", bad.unwrap());
    }
}

fn fp(cnt: u32, tag: u64) -> Fingerprint {
    Fingerprint { hash: [0, 0, tag, tag.wrapping_mul(0x9e37)], cnt }
}

#[test]
fn equivocator_never_breaks_the_contract() {
    let p = params();
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fa, fb, fake) = (fp(3, 1), fp(4, 2), fp(4, 3));
        // split sizes around the c_g/2 and c_g thresholds
        let k = [0, 1, 9, 10, 11, 19, 20, rng.random_range(0..=G)][(seed % 8) as usize];
        let mut inputs: Vec<Fingerprint> = (0..G).map(|i| if i < k { fa } else { fb }).collect();
        inputs.shuffle(&mut rng);
        let mut order: Vec<usize> = (0..G).collect();
        order.shuffle(&mut rng);
        let in_a: Vec<bool> = {
            let mut m = vec![false; G];
            for &v in &order[..G / 2] {
                m[v] = true;
            }
            m
        };
        let (ea, eb) = equivocating_echo(&inputs);
        let mut byz_init = Vec::new();
        let mut byz_echo = Vec::new();
        for b in 0..B {
            // one node pushes an invented value, the rest equivocate
            let (ia, ib) = if b == 0 && seed % 3 == 0 { (fake, fake) } else { (fa, fb) };
            byz_init.push((0..G).map(|v| Some(if in_a[v] { ia } else { ib })).collect());
            byz_echo.push((0..G).map(|v| Some(if in_a[v] { ea } else { eb })).collect());
        }
        let outs = run(&inputs, &byz_init, &byz_echo, &p);
        if let Some(bad) = violations(&inputs, &outs) {
            panic!("seed {seed}, k = {k}: {bad}");
        }
    }
}

#[test]
fn echo_flooding_of_a_fake_value_is_ignored() {
    let p = params();
    let inputs: Vec<u8> = (0..G).map(|i| (i % 2) as u8).collect();
    let flood: Pattern<u8> = vec![vec![Some(7); G]; B];
    let outs = run(&inputs, &flood, &flood, &p);
    assert!(outs.iter().all(|(s, o)| !s && *o != 7));
}
