// SPDX-License-Identifier: Apache-2.0

//! Falsification audits: misreport sweeps for truthfulness, individual
//! rationality and budget checks, approximation ratios, and spot checks of
//! monotonicity and diminishing returns for value oracles.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::knapsack;
use crate::market::{MarketInstance, MechanismOutcome};
use crate::mechanism::{Mechanism, Procurement};
use crate::submodular::{exhaustive_optimum, SubmodularInstance, ValueOracle};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Violations were found on a mechanism known not to satisfy the property.
    ExpectedFail,
}

/// Whether violations of a check indicate a bug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    #[default]
    MustHold,
    ViolationsExpected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub seed: Option<u64>,
    pub seller: Option<usize>,
    /// The misreported cost, for misreport checks.
    pub report: Option<f64>,
    pub detail: String,
    pub instance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: CheckStatus,
    pub evaluations: usize,
    pub violations: usize,
    /// Smallest slack seen; negative when violated.
    pub margin: f64,
    pub expectation: Expectation,
    pub witness: Option<Witness>,
}

impl CheckRecord {
    fn new(name: impl Into<String>, expectation: Expectation) -> Self {
        CheckRecord {
            name: name.into(),
            status: CheckStatus::Pass,
            evaluations: 0,
            violations: 0,
            margin: f64::INFINITY,
            expectation,
            witness: None,
        }
    }

    /// Records one comparison with the given slack.
    fn observe(&mut self, slack: f64, witness: impl FnOnce() -> Witness) {
        self.evaluations += 1;
        if slack < self.margin {
            if slack < 0.0 {
                self.witness = Some(witness());
            }
            self.margin = slack;
        }
        if slack < 0.0 {
            self.violations += 1;
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        self.status = match (self.violations, self.expectation) {
            (0, _) => CheckStatus::Pass,
            (_, Expectation::MustHold) => CheckStatus::Fail,
            (_, Expectation::ViolationsExpected) => CheckStatus::ExpectedFail,
        };
    }

    fn absorb(&mut self, other: CheckRecord) {
        self.evaluations += other.evaluations;
        self.violations += other.violations;
        if other.margin < self.margin {
            self.margin = other.margin;
            if other.witness.is_some() {
                self.witness = other.witness;
            }
        }
        self.refresh();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub checks: Vec<CheckRecord>,
}

impl AuditReport {
    /// True when no check failed unexpectedly.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    /// Folds another report in, combining checks with the same name.
    pub fn merge(&mut self, other: AuditReport) {
        for c in other.checks {
            match self.checks.iter_mut().find(|x| x.name == c.name) {
                Some(existing) => existing.absorb(c),
                None => self.checks.push(c),
            }
        }
    }

    /// Attaches a seed to every witness that lacks one.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for c in &mut self.checks {
            if let Some(w) = &mut c.witness {
                w.seed.get_or_insert(seed);
            }
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<32} {:<14} {:>10} {:>10} {:>14}", "check", "status", "evals", "violations", "margin")?;
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::ExpectedFail => "expected-fail",
            };
            writeln!(
                f,
                "{:<32} {:<14} {:>10} {:>10} {:>14.6e}",
                c.name, status, c.evaluations, c.violations, c.margin
            )?;
            if let Some(w) = &c.witness {
                writeln!(f, "    witness: {}", w.detail)?;
            }
        }
        Ok(())
    }
}

/// Misreports tried per seller: multiples of the true cost plus fixed values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisreportGrid {
    pub multipliers: Vec<f64>,
    pub absolute: Vec<f64>,
}

impl Default for MisreportGrid {
    fn default() -> Self {
        MisreportGrid { multipliers: vec![0.0, 0.25, 0.5, 0.9, 1.1, 2.0, 5.0, 10.0], absolute: Vec::new() }
    }
}

impl MisreportGrid {
    pub fn with_absolute(mut self, absolute: Vec<f64>) -> Self {
        self.absolute = absolute;
        self
    }

    fn reports(&self, cost: f64, upward_only: bool) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .multipliers
            .iter()
            .map(|m| m * cost)
            .chain(self.absolute.iter().copied())
            .filter(|d| d.is_finite() && *d >= 0.0 && *d != cost && (!upward_only || *d > cost))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

fn misreport_audit<I: Procurement, M: Mechanism<I>>(
    name: &str,
    mechanism: &M,
    inst: &I,
    grid: &MisreportGrid,
    tol: f64,
    expectation: Expectation,
    upward_only: bool,
) -> Result<AuditReport> {
    let mut check = CheckRecord::new(name, expectation);
    for i in 0..inst.seller_count() {
        let cost = inst.cost(i);
        let truthful = mechanism.seller_result(inst, i)?.utility(cost);
        for d in grid.reports(cost, upward_only) {
            let lied = mechanism.seller_result(&inst.with_report(i, d)?, i)?.utility(cost);
            check.observe(truthful + tol - lied, || Witness {
                seed: None,
                seller: Some(i),
                report: Some(d),
                detail: format!(
                    "{}: seller {i} with cost {cost} gains {:.3e} by reporting {d}",
                    mechanism.name(),
                    lied - truthful
                ),
                instance: inst.snapshot(),
            });
        }
    }
    Ok(AuditReport { checks: vec![check] })
}

/// No seller gains by misreporting in either direction.
pub fn audit_truthfulness<I: Procurement, M: Mechanism<I>>(
    mechanism: &M,
    inst: &I,
    grid: &MisreportGrid,
    tol: f64,
    expectation: Expectation,
) -> Result<AuditReport> {
    misreport_audit("truthfulness", mechanism, inst, grid, tol, expectation, false)
}

/// No seller gains by reporting a higher cost.
pub fn audit_oneway<I: Procurement, M: Mechanism<I>>(
    mechanism: &M,
    inst: &I,
    grid: &MisreportGrid,
    tol: f64,
) -> Result<AuditReport> {
    misreport_audit("oneway-truthfulness", mechanism, inst, grid, tol, Expectation::MustHold, true)
}

/// How far total payments may exceed the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum BudgetAllowance {
    Strict,
    /// Payments up to factor · B.
    Factor(f64),
    /// Payments up to B + amount.
    Additive(f64),
}

impl BudgetAllowance {
    pub fn limit(&self, budget: f64) -> f64 {
        match self {
            BudgetAllowance::Strict => budget,
            BudgetAllowance::Factor(f) => f * budget,
            BudgetAllowance::Additive(a) => budget + a,
        }
    }
}

/// Individual rationality, budget and allocation-range checks on one outcome.
pub fn audit_core(
    outcome: &MechanismOutcome,
    costs: &[f64],
    budget: f64,
    allowance: BudgetAllowance,
    tol: f64,
) -> AuditReport {
    let snapshot = || serde_json::json!({ "budget": budget, "costs": costs, "outcome": outcome });
    let mut ir = CheckRecord::new("individual-rationality", Expectation::MustHold);
    let mut range = CheckRecord::new("allocation-range", Expectation::MustHold);
    for (i, ((&x, &p), &c)) in outcome.allocations.iter().zip(&outcome.payments).zip(costs).enumerate() {
        ir.observe(p - c * x + tol, || Witness {
            seed: None,
            seller: Some(i),
            report: None,
            detail: format!("seller {i} paid {p} for fraction {x} at cost {c}"),
            instance: snapshot(),
        });
        let slack = x.min(1.0 - x).min(p) + tol;
        range.observe(slack, || Witness {
            seed: None,
            seller: Some(i),
            report: None,
            detail: format!("seller {i} has allocation {x} and payment {p}"),
            instance: snapshot(),
        });
    }
    let mut bud = CheckRecord::new("budget", Expectation::MustHold);
    let limit = allowance.limit(budget);
    bud.observe(limit * (1.0 + tol) - outcome.total_payment, || Witness {
        seed: None,
        seller: None,
        report: None,
        detail: format!("paid {} against limit {limit}", outcome.total_payment),
        instance: snapshot(),
    });
    AuditReport { checks: vec![ir, range, bud] }
}

pub fn audit_core_market(
    outcome: &MechanismOutcome,
    market: &MarketInstance,
    allowance: BudgetAllowance,
) -> AuditReport {
    audit_core(outcome, &market.costs(), market.budget, allowance, DEFAULT_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    FractionalKnapsack,
    ExhaustiveSubmodular,
}

/// value / benchmark >= floor - tol.
pub fn audit_ratio(value: f64, benchmark: f64, floor: f64, tol: f64) -> AuditReport {
    let mut check = CheckRecord::new("ratio", Expectation::MustHold);
    let ratio = if benchmark > 0.0 { value / benchmark } else { 1.0 };
    check.observe(ratio - floor + tol, || Witness {
        seed: None,
        seller: None,
        report: None,
        detail: format!("ratio {ratio} below floor {floor} (value {value}, benchmark {benchmark})"),
        instance: serde_json::Value::Null,
    });
    AuditReport { checks: vec![check] }
}

/// Ratio against the divisible optimum of an additive market.
pub fn audit_ratio_market(outcome: &MechanismOutcome, market: &MarketInstance, floor: f64) -> AuditReport {
    let opt = knapsack::fractional_value(market, market.budget);
    let mut r = audit_ratio(outcome.total_utility, opt, floor, DEFAULT_TOL);
    if let Some(w) = &mut r.checks[0].witness {
        w.instance = market.snapshot();
    }
    r
}

/// Ratio against the exhaustive optimum of a submodular instance.
pub fn audit_ratio_submodular(
    outcome: &MechanismOutcome,
    inst: &SubmodularInstance,
    floor: f64,
) -> Result<AuditReport> {
    let (opt, _) = exhaustive_optimum(inst, inst.budget())?;
    let mut r = audit_ratio(outcome.total_utility, opt, floor, DEFAULT_TOL);
    if let Some(w) = &mut r.checks[0].witness {
        w.instance = inst.snapshot();
    }
    Ok(r)
}

/// Random (T ⊂ T', s ∉ T') triples: F must be monotone and have diminishing returns.
pub fn audit_submodularity(oracle: &dyn ValueOracle, n: usize, trials: usize, seed: u64) -> AuditReport {
    let mut mono = CheckRecord::new("monotonicity", Expectation::MustHold);
    let mut dim = CheckRecord::new("diminishing-returns", Expectation::MustHold);
    if n == 0 {
        return AuditReport { checks: vec![mono, dim] };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let s = rng.random_range(0..n);
        let mut big = 0u64;
        let mut small = 0u64;
        for j in (0..n).filter(|&j| j != s) {
            if rng.random_bool(0.5) {
                big |= 1 << j;
                if rng.random_bool(0.5) {
                    small |= 1 << j;
                }
            }
        }
        let with = |t: u64| t | (1 << s);
        let (fs, fsw, fb, fbw) =
            (oracle.value(small), oracle.value(with(small)), oracle.value(big), oracle.value(with(big)));
        let tol = DEFAULT_TOL * fbw.abs().max(1.0);
        let witness = |what: &str| Witness {
            seed: Some(seed),
            seller: Some(s),
            report: None,
            detail: format!("{what}: T = {small:#b}, T' = {big:#b}, s = {s}"),
            instance: oracle.describe(),
        };
        mono.observe((fsw - fs).min(fbw - fb).min(fb - fs) + tol, || witness("value decreases"));
        dim.observe((fsw - fs) - (fbw - fb) + tol, || witness("marginal gain grows"));
    }
    AuditReport { checks: vec![mono, dim] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::OutcomeRates;
    use crate::submodular::{FnOracle, SubmodularFamily};

    struct Constant;

    impl Mechanism<MarketInstance> for Constant {
        fn name(&self) -> String {
            "constant".into()
        }

        fn run(&self, m: &MarketInstance) -> Result<MechanismOutcome> {
            Ok(MechanismOutcome::additive(
                "constant",
                vec![0.5; m.len()],
                vec![1.0; m.len()],
                &m.utilities(),
                OutcomeRates::None,
            ))
        }
    }

    #[test]
    fn constant_mechanism_is_truthful() {
        let m = crate::market::generate_market(6, 0.3, (1.0, 1.0), 1).unwrap();
        let r =
            audit_truthfulness(&Constant, &m, &MisreportGrid::default(), DEFAULT_TOL, Expectation::MustHold).unwrap();
        assert!(r.passed());
        assert_eq!(r.checks[0].evaluations, 6 * 8);
    }

    #[test]
    fn oneway_grid_is_upward() {
        let g = MisreportGrid::default().with_absolute(vec![0.1, 3.0]);
        assert_eq!(g.reports(1.0, true), vec![1.1, 2.0, 3.0, 5.0, 10.0]);
        assert_eq!(g.reports(0.0, false), vec![0.1, 3.0]);
    }

    #[test]
    fn core_flags_overspending() {
        let o = MechanismOutcome::additive("x", vec![1.0, 0.5], vec![2.0, 2.0], &[1.0, 1.0], OutcomeRates::None);
        let r = audit_core(&o, &[1.0, 1.0], 3.0, BudgetAllowance::Strict, DEFAULT_TOL);
        assert_eq!(r.check("budget").unwrap().status, CheckStatus::Fail);
        assert_eq!(r.check("individual-rationality").unwrap().status, CheckStatus::Pass);
        let r = audit_core(&o, &[1.0, 1.0], 3.0, BudgetAllowance::Additive(1.0), DEFAULT_TOL);
        assert!(r.passed());
    }

    #[test]
    fn submodularity_cases() {
        let add = SubmodularFamily::Additive { utilities: vec![1.0, 2.0, 3.0, 0.5] };
        assert!(audit_submodularity(&add, 4, 200, 1).passed());
        let cov =
            SubmodularFamily::Coverage { sets: vec![vec![0, 1], vec![1, 2], vec![2, 3, 4], vec![0]], weights: None }
                .into_oracle()
                .unwrap();
        assert!(audit_submodularity(cov.as_ref(), 4, 200, 2).passed());
        let sq = FnOracle::new(5, |s: u64| (s.count_ones() as f64).powi(2));
        let r = audit_submodularity(&sq, 5, 200, 3);
        let dr = r.check("diminishing-returns").unwrap();
        assert_eq!(dr.status, CheckStatus::Fail);
        assert!(dr.witness.is_some());
    }

    #[test]
    fn merge_combines_counts() {
        let mut a = audit_ratio(1.0, 2.0, 0.4, 0.0);
        a.merge(audit_ratio(1.0, 4.0, 0.4, 0.0));
        assert_eq!(a.checks.len(), 1);
        assert_eq!(a.checks[0].evaluations, 2);
        assert_eq!(a.checks[0].violations, 1);
        assert!(!a.passed());
    }
}
