// SPDX-License-Identifier: Apache-2.0

use budgetmech::divisible::run_truthful;
use budgetmech::market::generate_market;
use budgetmech::rounding::{decompose, round, truthful_rounder, BudgetPolytopeSpec, Rounder};
use budgetmech::rules::StandardRule;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point_in_polytope() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..25)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0, 0.0f64..1.0], n),
                prop::collection::vec(0.01f64..5.0, n),
                0.0f64..0.5,
            )
        })
        .prop_map(|(x, w, slack)| {
            let load: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            (x, w, load * (1.0 + slack))
        })
}

proptest! {
    #[test]
    fn lottery_postconditions((x, w, cap) in point_in_polytope()) {
        let spec = BudgetPolytopeSpec::new(w.clone(), cap).unwrap();
        let lottery = decompose(&x, &spec).unwrap();
        prop_assert!(lottery.atoms.len() <= x.len() + 2);
        let total: f64 = lottery.atoms.iter().map(|a| a.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for (m, xi) in lottery.marginals().iter().zip(&x) {
            prop_assert!((m - xi).abs() < 1e-9, "marginal {} vs {}", m, xi);
        }
        for a in &lottery.atoms {
            prop_assert!(a.probability > 0.0);
            prop_assert!(a.is_semi_integral());
            prop_assert!(spec.load(&a.point) <= cap * (1.0 + 1e-9) + 1e-12);
            for (z, xi) in a.point.iter().zip(&x) {
                if *xi == 0.0 || *xi == 1.0 {
                    prop_assert_eq!(z, xi);
                }
            }
        }
    }

    #[test]
    fn every_sample_within_one_item_of_budget((x, w, cap) in point_in_polytope(), seed: u64) {
        let p: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        let rounder = Rounder::new(&x, &p, cap).unwrap();
        let w_max = w.iter().cloned().fold(0.0, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let out = rounder.sample(&mut rng);
            prop_assert!(out.total_payment() <= cap + w_max + 1e-9);
            for (i, (&won, &pay)) in out.allocation.iter().zip(&out.payments).enumerate() {
                if won {
                    prop_assert_eq!(pay, p[i] / x[i]);
                } else {
                    prop_assert_eq!(pay, 0.0);
                }
            }
        }
    }
}

#[test]
fn single_item_half_frequency() {
    let rounder = Rounder::new(&[0.5], &[1.0], 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let trials = 100_000;
    let mut bought = 0;
    for _ in 0..trials {
        let out = rounder.sample(&mut rng);
        if out.allocation[0] {
            bought += 1;
            assert_eq!(out.payments[0], 2.0);
        }
    }
    let freq = bought as f64 / trials as f64;
    let se = (0.25 / trials as f64).sqrt();
    assert!((freq - 0.5).abs() <= 3.0 * se, "frequency {freq}");
}

#[test]
fn expected_surplus_is_preserved() {
    let m = generate_market(20, 0.1, (0.5, 2.0), 4).unwrap();
    let res = run_truthful(&m, &StandardRule::LogOptimal).unwrap().outcome;
    let rounder = Rounder::new(&res.allocations, &res.payments, m.budget).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let trials = 100_000;
    let mut surplus = vec![0.0; m.len()];
    let mut surplus_sq = vec![0.0; m.len()];
    for _ in 0..trials {
        let out = rounder.sample(&mut rng);
        for i in 0..m.len() {
            let s = out.payments[i] - if out.allocation[i] { m.sellers[i].cost } else { 0.0 };
            surplus[i] += s;
            surplus_sq[i] += s * s;
        }
    }
    for i in 0..m.len() {
        let mean = surplus[i] / trials as f64;
        let var = (surplus_sq[i] / trials as f64 - mean * mean).max(0.0);
        let se = (var / trials as f64).sqrt();
        let expect = res.payments[i] - m.sellers[i].cost * res.allocations[i];
        assert!((mean - expect).abs() <= 4.0 * se + 1e-12, "seller {i}: {mean} vs {expect}");
    }
}

#[test]
fn reduced_budget_rounding_runs() {
    let m = generate_market(30, 0.05, (1.0, 1.0), 6).unwrap();
    let (res, rounder) = truthful_rounder(&m, &StandardRule::LogOptimal, 0.1).unwrap();
    assert!(res.outcome.total_payment <= 0.9 * m.budget);
    let out = rounder.sample(&mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(out.allocation.len(), 30);
    assert!(truthful_rounder(&m, &StandardRule::LogOptimal, 1.0).is_err());
}

#[test]
fn rounding_is_deterministic_by_seed() {
    let x = [0.3, 0.6, 0.9, 0.1];
    let p = [0.3, 0.9, 1.8, 0.05];
    let a = round(&x, &p, 3.05, 42).unwrap();
    let b = round(&x, &p, 3.05, 42).unwrap();
    assert_eq!(a, b);
}
