// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid seller {index}: {reason}")]
    InvalidSeller { index: usize, reason: String },

    #[error("budget must be positive and finite, got {0}")]
    InvalidBudget(f64),

    #[error("market has no sellers")]
    EmptyMarket,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("instance too large for exhaustive search: n = {n}, limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("invalid tabulated rule: {0}")]
    InvalidTable(String),

    #[error("point is outside the budget polytope: weighted sum {load} exceeds cap {cap}")]
    OutsidePolytope { load: f64, cap: f64 },

    #[error("root finder failed: {0}")]
    Solver(String),

    #[error("budget exceeded: paid {paid}, budget {budget}")]
    BudgetExceeded { paid: f64, budget: f64 },

    #[error("degenerate probe grid: {0}")]
    DegenerateGrid(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
