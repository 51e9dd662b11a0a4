// SPDX-License-Identifier: Apache-2.0

//! Command-line runner for the `budgetmech` library: configs, seeded trial
//! loops and CSV/JSON reports.

pub mod cli;
pub mod commands;
pub mod config;
pub mod report;
pub mod seeds;
pub mod setup;

pub use config::ExperimentConfig;
pub use report::Report;
