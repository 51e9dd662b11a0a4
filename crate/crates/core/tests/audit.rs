// SPDX-License-Identifier: Apache-2.0

use budgetmech::audit::{
    audit_core_market, audit_ratio_market, audit_truthfulness, BudgetAllowance, CheckStatus, Expectation, MisreportGrid,
};
use budgetmech::divisible::{run_envy_free, run_truthful, DivisibleMechanism};
use budgetmech::market::{generate_market, MarketInstance};
use budgetmech::mechanism::Mechanism;
use budgetmech::rules::StandardRule;

fn step() -> StandardRule {
    StandardRule::step(0.55).unwrap()
}

#[test]
fn envy_free_step_violation_replays() {
    let mech = DivisibleMechanism::EnvyFree(step());
    let mut found = None;
    for seed in 0..20 {
        let m = generate_market(12, 0.2, (0.5, 2.0), seed).unwrap();
        let r =
            audit_truthfulness(&mech, &m, &MisreportGrid::default(), 1e-9, Expectation::ViolationsExpected).unwrap();
        assert!(r.passed());
        let c = r.check("truthfulness").unwrap();
        if c.violations > 0 {
            assert_eq!(c.status, CheckStatus::ExpectedFail);
            found = c.witness.clone();
            break;
        }
    }
    let w = found.expect("some market exposes a profitable misreport");
    let market: MarketInstance = serde_json::from_value(w.instance).unwrap();
    let (i, d) = (w.seller.unwrap(), w.report.unwrap());
    let cost = market.sellers[i].cost;
    let honest = mech.seller_result(&market, i).unwrap().utility(cost);
    let lied = mech.seller_result(&market.with_cost(i, d).unwrap(), i).unwrap().utility(cost);
    assert!(lied > honest + 1e-9, "{honest} vs {lied}");
}

#[test]
fn same_violation_counts_as_failure_when_required() {
    let mech = DivisibleMechanism::EnvyFree(step());
    let fails = (0..20).any(|seed| {
        let m = generate_market(12, 0.2, (0.5, 2.0), seed).unwrap();
        let r = audit_truthfulness(&mech, &m, &MisreportGrid::default(), 1e-9, Expectation::MustHold).unwrap();
        !r.passed()
    });
    assert!(fails);
}

#[test]
fn truthful_log_optimal_passes_every_check() {
    let mech = DivisibleMechanism::Truthful(StandardRule::LogOptimal);
    for seed in 0..10 {
        let m = generate_market(15, 0.1, (0.5, 2.0), seed).unwrap();
        let mut r = audit_truthfulness(&mech, &m, &MisreportGrid::default(), 1e-9, Expectation::MustHold).unwrap();
        let out = run_truthful(&m, &StandardRule::LogOptimal).unwrap().outcome;
        r.merge(audit_core_market(&out, &m, BudgetAllowance::Strict));
        assert!(r.passed(), "{r}");
        assert_eq!(r.check("truthfulness").unwrap().evaluations, 15 * 8);
    }
}

#[test]
fn overspending_and_ratio_failures_are_caught() {
    let m = generate_market(10, 0.2, (1.0, 1.0), 3).unwrap();
    let mut out = run_envy_free(&m, &StandardRule::LogOptimal).unwrap().outcome;
    assert!(audit_core_market(&out, &m, BudgetAllowance::Strict).passed());
    out.payments[0] += m.budget;
    out.total_payment += m.budget;
    let r = audit_core_market(&out, &m, BudgetAllowance::Strict);
    assert_eq!(r.check("budget").unwrap().status, CheckStatus::Fail);
    assert!(audit_core_market(&out, &m, BudgetAllowance::Factor(3.0)).passed());

    let ratio = audit_ratio_market(&out, &m, 1.01);
    assert!(!ratio.passed());
    let w = ratio.check("ratio").unwrap().witness.as_ref().unwrap();
    assert!(w.instance.is_object());
}

#[test]
fn report_json_round_trips_fields() {
    let m = generate_market(5, 0.3, (0.5, 2.0), 1).unwrap();
    let r = audit_truthfulness(
        &DivisibleMechanism::EnvyFree(step()),
        &m,
        &MisreportGrid::default(),
        1e-9,
        Expectation::ViolationsExpected,
    )
    .unwrap()
    .with_seed(77);
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    let c = &v["checks"][0];
    assert_eq!(c["name"], "truthfulness");
    assert_eq!(c["evaluations"], 40);
    if let Some(w) = c["witness"].as_object() {
        assert_eq!(w["seed"], 77);
    }
}
