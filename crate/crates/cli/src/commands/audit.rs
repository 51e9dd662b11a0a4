// SPDX-License-Identifier: Apache-2.0

use anyhow::Result;
use budgetmech::adversarial::PostedPrice;
use budgetmech::audit::{
    audit_core, audit_oneway, audit_ratio, audit_submodularity, audit_truthfulness, AuditReport, CheckStatus,
    Expectation, MisreportGrid,
};
use budgetmech::divisible::DivisibleMechanism;
use serde::Serialize;

use super::{config_echo, per_trial};
use crate::config::ExperimentConfig;
use crate::report::{Report, Row, Table};
use crate::seeds::{substream, AUDIT, INSTANCE, ROUNDING};
use crate::setup::{build_instance, Instance, Runner};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditRow {
    pub trial: usize,
    pub seed: u64,
    pub check: String,
    pub status: String,
    pub evaluations: usize,
    pub violations: usize,
    pub margin: f64,
}

impl Row for AuditRow {
    const HEADER: &'static [&'static str] =
        &["trial", "seed", "check", "status", "evaluations", "violations", "margin"];
}

fn status_name(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "fail",
        CheckStatus::ExpectedFail => "expected-fail",
    }
}

/// Every check that applies to `runner` on one instance.
fn audit_instance(cfg: &ExperimentConfig, runner: &Runner, inst: &Instance, k: usize) -> Result<AuditReport> {
    let tol = cfg.audit.tol;
    let grid = MisreportGrid { multipliers: cfg.audit.multipliers.clone(), absolute: cfg.audit.absolute.clone() };
    let m = runner.execute(inst, substream(cfg.seed, ROUNDING, k as u64))?;
    let max_win = m.outcome.payments.iter().zip(&m.outcome.allocations).filter(|(_, &x)| x > 0.0).map(|(&p, _)| p);
    let allowance = runner.allowance(&m, max_win.fold(0.0, f64::max));
    let mut report = audit_core(&m.outcome, &inst.costs(), inst.budget(), allowance, tol);
    if let Some(floor) = runner.ratio_floor(&m) {
        report.merge(audit_ratio(m.outcome.total_utility, m.benchmark, floor, tol));
    }
    match runner {
        Runner::Divisible(mech) => {
            let expect = match mech {
                DivisibleMechanism::EnvyFree(_) => Expectation::ViolationsExpected,
                DivisibleMechanism::Truthful(_) => Expectation::MustHold,
            };
            report.merge(audit_truthfulness(mech, inst.market()?, &grid, tol, expect)?);
        }
        Runner::Rounded { rule, epsilon } => {
            // Rounding keeps expected utility, so the fractional mechanism is what gets audited.
            let market = inst.market()?;
            let reduced = market.with_budget(market.budget * (1.0 - epsilon))?;
            let mech = DivisibleMechanism::Truthful(rule.clone());
            report.merge(audit_truthfulness(&mech, &reduced, &grid, tol, Expectation::MustHold)?);
        }
        Runner::Posted(p) => {
            report.merge(audit_truthfulness(&PostedPrice(*p), inst.market()?, &grid, tol, Expectation::MustHold)?);
        }
        Runner::Submodular { mechanism, epsilon } => {
            let sub = inst.as_submodular()?;
            let sub = sub.with_budget(sub.budget() * (1.0 - epsilon))?;
            report.merge(audit_oneway(mechanism, &sub, &grid, tol)?);
            let expect = if runner.is_critical() { Expectation::MustHold } else { Expectation::ViolationsExpected };
            report.merge(audit_truthfulness(mechanism, &sub, &grid, tol, expect)?);
            let seed = substream(cfg.seed, AUDIT, k as u64);
            report.merge(audit_submodularity(sub.oracle().as_ref(), sub.n(), cfg.audit.submodularity_trials, seed));
        }
    }
    Ok(report)
}

pub fn audit(cfg: &ExperimentConfig) -> Result<Report> {
    let runner = Runner::from_config(&cfg.mechanism)?;
    let reports = per_trial(cfg.trials, |k| {
        let seed = substream(cfg.seed, INSTANCE, k as u64);
        let inst = build_instance(&cfg.instance, seed)?;
        Ok((seed, audit_instance(cfg, &runner, &inst, k)?.with_seed(seed)))
    })?;
    let mut rows = Vec::new();
    let mut merged = AuditReport::default();
    for (k, (seed, r)) in reports.into_iter().enumerate() {
        for c in &r.checks {
            rows.push(AuditRow {
                trial: k,
                seed,
                check: c.name.clone(),
                status: status_name(c.status).into(),
                evaluations: c.evaluations,
                violations: c.violations,
                margin: c.margin,
            });
        }
        merged.merge(r);
    }
    let failed = !merged.passed();
    let summary = serde_json::json!({
        "command": "audit",
        "trials": cfg.trials,
        "passed": !failed,
        "total_violations": merged.total_violations(),
        "checks": merged.checks,
        "config": config_echo(cfg),
    });
    Ok(Report { command: "audit", tables: vec![Table::new("audit", &rows)?], summary, artifacts: Vec::new(), failed })
}
