// SPDX-License-Identifier: Apache-2.0

//! The five subcommands. Each returns a [`Report`]; nothing here touches the
//! file system except through instance files named in the config.

mod audit;
mod hardness;
mod probe;
mod run;
mod sweep;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

pub use audit::{audit, AuditRow};
pub use hardness::hardness;
pub use probe::{probe, ProbeRow};
pub use run::{run, RunRow, SellerRow};
pub use sweep::{sweep, SweepRow};

use crate::config::ExperimentConfig;
use crate::report::{Report, Row};

/// Runs `f` for every trial index on the pool; results keep index order.
pub(crate) fn per_trial<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(&f).collect()
}

/// The config as echoed into summaries, minus the output location.
pub(crate) fn config_echo(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut c = cfg.clone();
    c.out = None;
    serde_json::to_value(c).expect("config serializes")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub(crate) struct Spread {
    pub mean: Option<f64>,
    pub worst: Option<f64>,
    pub worst_index: Option<usize>,
}

/// Mean and minimum of `values`, with the position of the minimum.
pub(crate) fn spread(values: impl IntoIterator<Item = f64>) -> Spread {
    let mut s = Spread::default();
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, v) in values.into_iter().enumerate() {
        sum += v;
        count += 1;
        if s.worst.is_none_or(|w| v < w) {
            s.worst = Some(v);
            s.worst_index = Some(i);
        }
    }
    if count > 0 {
        s.mean = Some(sum / count as f64);
    }
    s
}

pub fn dispatch(command: Command, cfg: &ExperimentConfig) -> Result<Report> {
    match command {
        Command::Run => run(cfg),
        Command::Sweep => sweep(cfg),
        Command::Audit => audit(cfg),
        Command::Hardness => hardness(cfg),
        Command::Probe => probe(cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Run a mechanism on each trial instance.
    Run,
    /// Worst-case ratios over a grid of θ or step heights.
    Sweep,
    /// Truthfulness, rationality, budget and ratio checks.
    Audit,
    /// Posted price and the truthful mechanism on hardness markets.
    Hardness,
    /// Build a two-group instance on which a rule does no better than β.
    Probe,
}

impl Row for budgetmech::adversarial::HardnessTrial {
    const HEADER: &'static [&'static str] = &[
        "seed",
        "n",
        "budget",
        "total_cost",
        "posted_price_utility_per_seller",
        "posted_price_payment",
        "integral_optimum",
        "truthful_utility",
        "truthful_payment",
        "truthful_ratio",
    ];
}
