// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::E;

use anyhow::Result;
use budgetmech::adversarial::{budget_exhausting_price, hardness_trial};

use super::{config_echo, per_trial};
use crate::config::ExperimentConfig;
use crate::report::{Report, Table};
use crate::seeds::{substream, INSTANCE};

pub fn hardness(cfg: &ExperimentConfig) -> Result<Report> {
    let rows = per_trial(cfg.trials, |k| Ok(hardness_trial(cfg.hardness.n, substream(cfg.seed, INSTANCE, k as u64))?))?;
    let count = rows.len();
    let mean_posted =
        (count > 0).then(|| rows.iter().map(|r| r.posted_price_utility_per_seller).sum::<f64>() / count as f64);
    let ratios = rows.iter().map(|r| r.truthful_ratio);
    let summary = serde_json::json!({
        "command": "hardness",
        "trials": count,
        "n": cfg.hardness.n,
        "price": budget_exhausting_price(),
        "posted_price_target": 1.0 - 1.0 / E,
        "mean_posted_price_utility_per_seller": mean_posted,
        "min_truthful_ratio": ratios.clone().reduce(f64::min),
        "max_truthful_ratio": ratios.reduce(f64::max),
        "config": config_echo(cfg),
    });
    Ok(Report {
        command: "hardness",
        tables: vec![Table::new("hardness", &rows)?],
        summary,
        artifacts: Vec::new(),
        failed: false,
    })
}
