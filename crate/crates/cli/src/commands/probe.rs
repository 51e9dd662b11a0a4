// SPDX-License-Identifier: Apache-2.0

use anyhow::Result;
use budgetmech::adversarial::{default_probe_grid, measure_probe, worst_case_probe, RulePointCloud};
use serde::Serialize;

use super::config_echo;
use crate::config::ExperimentConfig;
use crate::report::{Report, Row, Table};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProbeRow {
    pub rule: String,
    pub beta: f64,
    pub min_beta: Option<f64>,
    pub found: bool,
    pub alpha: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub m: usize,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub fractional_optimum: Option<f64>,
    pub envy_free_ratio: Option<f64>,
    pub truthful_ratio: Option<f64>,
    /// β + 2/M: what the envy-free ratio may reach on the emitted instance.
    pub bound: f64,
}

impl Row for ProbeRow {
    const HEADER: &'static [&'static str] = &[
        "rule",
        "beta",
        "min_beta",
        "found",
        "alpha",
        "c1",
        "c2",
        "m",
        "n1",
        "n2",
        "fractional_optimum",
        "envy_free_ratio",
        "truthful_ratio",
        "bound",
    ];
}

pub fn probe(cfg: &ExperimentConfig) -> Result<Report> {
    let rule = cfg.mechanism.parsed_rule()?;
    let p = &cfg.probe;
    let grid = default_probe_grid(&rule, p.grid_points);
    let cloud = RulePointCloud::build(&rule, &grid)?;
    let mut row = ProbeRow {
        rule: rule.to_string(),
        beta: p.beta,
        min_beta: cloud.min_beta(),
        m: p.m,
        bound: p.beta + 2.0 / p.m as f64,
        ..ProbeRow::default()
    };
    let mut artifacts = Vec::new();
    if let Some(res) = worst_case_probe(&rule, p.beta, &grid, p.m)? {
        let meas = measure_probe(&rule, &res.market)?;
        let prov = &res.provenance;
        row.found = true;
        row.alpha = Some(prov.alpha);
        row.c1 = Some(prov.c1);
        row.c2 = Some(prov.c2);
        row.n1 = Some(prov.n1);
        row.n2 = Some(prov.n2);
        row.fractional_optimum = Some(meas.fractional_optimum);
        row.envy_free_ratio = Some(meas.envy_free_ratio);
        row.truthful_ratio = Some(meas.truthful_ratio);
        let mut market = res.market.to_json();
        market.push('\n');
        let mut sidecar = serde_json::to_string_pretty(prov)?;
        sidecar.push('\n');
        artifacts.push(("probe_market.json".to_string(), market));
        artifacts.push(("probe_market.provenance.json".to_string(), sidecar));
    }
    let failed = row.envy_free_ratio.is_some_and(|r| r > row.bound);
    let summary = serde_json::json!({
        "command": "probe",
        "result": row,
        "within_bound": !failed,
        "config": config_echo(cfg),
    });
    Ok(Report { command: "probe", tables: vec![Table::new("probe", &[row])?], summary, artifacts, failed })
}
