// SPDX-License-Identifier: Apache-2.0

use anyhow::{bail, Result};
use budgetmech::adversarial::{default_probe_grid, measure_probe, worst_case_probe, RulePointCloud};
use budgetmech::divisible::DivisibleMechanism;
use budgetmech::StandardRule;
use serde::Serialize;

use super::{config_echo, per_trial, spread};
use crate::config::{ExperimentConfig, InstanceSource};
use crate::report::{Report, Row, Table};
use crate::seeds::{substream, INSTANCE, ROUNDING};
use crate::setup::{build_instance, Runner};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepRow {
    /// `theta` or `t`.
    pub parameter: String,
    pub value: f64,
    pub trials: usize,
    pub mechanism: String,
    pub worst_ratio: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub worst_trial: Option<usize>,
    /// Smallest guaranteed ratio over the cell's trials, when one is known.
    pub floor: Option<f64>,
    /// Smallest β the rule's point-cloud hull admits.
    pub certified_beta: Option<f64>,
    /// Ratio measured on the two-group instance built at `certified_beta`.
    pub probe_ratio: Option<f64>,
    /// Lesser of `worst_ratio` and `probe_ratio`.
    pub cell_worst: Option<f64>,
}

impl Row for SweepRow {
    const HEADER: &'static [&'static str] = &[
        "parameter",
        "value",
        "trials",
        "mechanism",
        "worst_ratio",
        "mean_ratio",
        "worst_trial",
        "floor",
        "certified_beta",
        "probe_ratio",
        "cell_worst",
    ];
}

/// Ratios of `runner` over the configured trials on `source`.
fn random_trials(
    cfg: &ExperimentConfig,
    runner: &Runner,
    source: &InstanceSource,
) -> Result<(Vec<f64>, Option<f64>, Option<String>)> {
    let measured = per_trial(cfg.trials, |k| {
        let inst = build_instance(source, substream(cfg.seed, INSTANCE, k as u64))?;
        let m = runner.execute(&inst, substream(cfg.seed, ROUNDING, k as u64))?;
        Ok((m.ratio(), runner.ratio_floor(&m), m.outcome.mechanism))
    })?;
    let floor = measured.iter().map(|m| m.1).collect::<Option<Vec<f64>>>().and_then(|f| f.into_iter().reduce(f64::min));
    let name = measured.first().map(|m| m.2.clone());
    Ok((measured.into_iter().map(|m| m.0).collect(), floor, name))
}

fn theta_cell(cfg: &ExperimentConfig, runner: &Runner, theta: f64) -> Result<SweepRow> {
    let InstanceSource::Generator { n, utility_min, utility_max, .. } = cfg.instance else {
        bail!("a θ sweep needs a generator instance source");
    };
    let source = InstanceSource::Generator { n, theta, utility_min, utility_max };
    let (ratios, floor, name) = random_trials(cfg, runner, &source)?;
    let s = spread(ratios.iter().copied());
    Ok(SweepRow {
        parameter: "theta".into(),
        value: theta,
        trials: ratios.len(),
        mechanism: name.unwrap_or_default(),
        worst_ratio: s.worst,
        mean_ratio: s.mean,
        worst_trial: s.worst_index,
        floor,
        certified_beta: None,
        probe_ratio: None,
        cell_worst: s.worst,
    })
}

fn step_cell(cfg: &ExperimentConfig, runner: &Runner, t: f64) -> Result<SweepRow> {
    let rule = StandardRule::step(t)?;
    let runner = runner.with_rule(rule.clone());
    let truthful_side = !matches!(runner, Runner::Divisible(DivisibleMechanism::EnvyFree(_)));
    let grid = default_probe_grid(&rule, cfg.sweep.grid_points);
    let beta = RulePointCloud::build(&rule, &grid)?.min_beta();
    let probe_ratio = match beta {
        Some(b) if b > 0.0 && b < 1.0 => match worst_case_probe(&rule, b, &grid, cfg.sweep.probe_m)? {
            Some(res) => {
                let meas = measure_probe(&rule, &res.market)?;
                Some(if truthful_side { meas.truthful_ratio } else { meas.envy_free_ratio })
            }
            None => None,
        },
        _ => None,
    };
    let (ratios, _, name) = random_trials(cfg, &runner, &cfg.instance)?;
    let s = spread(ratios.iter().copied());
    let cell_worst = match (s.worst, probe_ratio) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    Ok(SweepRow {
        parameter: "t".into(),
        value: t,
        trials: ratios.len(),
        mechanism: name.unwrap_or_else(|| format!("{}", rule)),
        worst_ratio: s.worst,
        mean_ratio: s.mean,
        worst_trial: s.worst_index,
        floor: None,
        certified_beta: beta,
        probe_ratio,
        cell_worst,
    })
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let runner = Runner::from_config(&cfg.mechanism)?;
    if !cfg.sweep.steps.is_empty() && runner.rule().is_none() {
        bail!("a step sweep needs a rule-based mechanism (envy-free, truthful or truthful-rounded)");
    }
    let mut rows = Vec::new();
    for &theta in &cfg.sweep.thetas {
        rows.push(theta_cell(cfg, &runner, theta)?);
    }
    for &t in &cfg.sweep.steps {
        rows.push(step_cell(cfg, &runner, t)?);
    }
    let peak = rows.iter().filter(|r| r.parameter == "t").filter_map(|r| r.cell_worst.map(|w| (r.value, w))).fold(
        None,
        |best: Option<(f64, f64)>, (t, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((t, w)),
        },
    );
    let summary = serde_json::json!({
        "command": "sweep",
        "theta_cells": cfg.sweep.thetas.len(),
        "step_cells": cfg.sweep.steps.len(),
        "peak_t": peak.map(|p| p.0),
        "peak_ratio": peak.map(|p| p.1),
        "config": config_echo(cfg),
    });
    Ok(Report {
        command: "sweep",
        tables: vec![Table::new("sweep", &rows)?],
        summary,
        artifacts: Vec::new(),
        failed: false,
    })
}
