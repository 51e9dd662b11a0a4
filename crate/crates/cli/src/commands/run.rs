// SPDX-License-Identifier: Apache-2.0

use anyhow::Result;
use serde::Serialize;

use super::{config_echo, per_trial, spread};
use crate::config::ExperimentConfig;
use crate::report::{Report, Row, Table};
use crate::seeds::{substream, INSTANCE, ROUNDING};
use crate::setup::{build_instance, Runner};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunRow {
    pub trial: usize,
    pub seed: u64,
    pub mechanism: String,
    pub n: usize,
    pub budget: f64,
    pub theta: f64,
    pub total_utility: f64,
    pub total_payment: f64,
    pub benchmark: f64,
    pub benchmark_kind: String,
    pub ratio: f64,
    pub rate_min: Option<f64>,
    pub rate_max: Option<f64>,
}

impl Row for RunRow {
    const HEADER: &'static [&'static str] = &[
        "trial",
        "seed",
        "mechanism",
        "n",
        "budget",
        "theta",
        "total_utility",
        "total_payment",
        "benchmark",
        "benchmark_kind",
        "ratio",
        "rate_min",
        "rate_max",
    ];
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SellerRow {
    pub trial: usize,
    pub seller: usize,
    pub cost: f64,
    pub allocation: f64,
    pub payment: f64,
}

impl Row for SellerRow {
    const HEADER: &'static [&'static str] = &["trial", "seller", "cost", "allocation", "payment"];
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let runner = Runner::from_config(&cfg.mechanism)?;
    let results = per_trial(cfg.trials, |k| {
        let seed = substream(cfg.seed, INSTANCE, k as u64);
        let inst = build_instance(&cfg.instance, seed)?;
        let m = runner.execute(&inst, substream(cfg.seed, ROUNDING, k as u64))?;
        let (rate_min, rate_max) = m.rate_range();
        let row = RunRow {
            trial: k,
            seed,
            mechanism: m.outcome.mechanism.clone(),
            n: inst.n(),
            budget: inst.budget(),
            theta: m.theta,
            total_utility: m.outcome.total_utility,
            total_payment: m.outcome.total_payment,
            benchmark: m.benchmark,
            benchmark_kind: m.benchmark_kind.to_string(),
            ratio: m.ratio(),
            rate_min,
            rate_max,
        };
        let sellers: Vec<SellerRow> = if cfg.per_seller {
            inst.costs()
                .iter()
                .enumerate()
                .map(|(i, &cost)| SellerRow {
                    trial: k,
                    seller: i,
                    cost,
                    allocation: m.outcome.allocations[i],
                    payment: m.outcome.payments[i],
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok((row, sellers))
    })?;
    let (rows, sellers): (Vec<RunRow>, Vec<Vec<SellerRow>>) = results.into_iter().unzip();
    let mut tables = vec![Table::new("run", &rows)?];
    if cfg.per_seller {
        tables.push(Table::new("run_sellers", &sellers.concat())?);
    }
    let ratios = spread(rows.iter().map(|r| r.ratio));
    let count = rows.len().max(1) as f64;
    let summary = serde_json::json!({
        "command": "run",
        "trials": rows.len(),
        "mechanism": rows.first().map(|r| r.mechanism.clone()),
        "mean_ratio": ratios.mean,
        "worst_ratio": ratios.worst,
        "worst_trial": ratios.worst_index,
        "mean_utility": (!rows.is_empty()).then(|| rows.iter().map(|r| r.total_utility).sum::<f64>() / count),
        "mean_payment": (!rows.is_empty()).then(|| rows.iter().map(|r| r.total_payment).sum::<f64>() / count),
        "max_payment_share": rows.iter().map(|r| r.total_payment / r.budget).reduce(f64::max),
        "config": config_echo(cfg),
    });
    Ok(Report { command: "run", tables, summary, artifacts: Vec::new(), failed: false })
}
