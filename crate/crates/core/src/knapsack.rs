// SPDX-License-Identifier: Apache-2.0

//! Exact knapsack benchmarks: the divisible optimum u*(b), the integral
//! optimum by exhaustive search, and a concavity check of u*.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::MarketInstance;

pub const INTEGRAL_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalSolution {
    pub value: f64,
    pub fractions: Vec<f64>,
    pub spend: f64,
}

/// Seller indices by ascending cost per utility, ties by index.
pub fn rate_order(market: &MarketInstance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..market.len()).collect();
    order.sort_by(|&a, &b| market.sellers[a].rate().total_cmp(&market.sellers[b].rate()).then(a.cmp(&b)));
    order
}

/// Greedy divisible optimum with budget `b`.
pub fn fractional_optimum(market: &MarketInstance, b: f64) -> FractionalSolution {
    let mut fractions = vec![0.0; market.len()];
    let mut left = b.max(0.0);
    let mut value = 0.0;
    let mut spend = 0.0;
    for i in rate_order(market) {
        let s = market.sellers[i];
        if s.cost <= left {
            fractions[i] = 1.0;
            left -= s.cost;
            spend += s.cost;
            value += s.utility;
        } else {
            let a = left / s.cost;
            fractions[i] = a;
            spend += left;
            value += a * s.utility;
            break;
        }
    }
    FractionalSolution { value, fractions, spend }
}

/// u*(b).
pub fn fractional_value(market: &MarketInstance, b: f64) -> f64 {
    fractional_optimum(market, b).value
}

/// True when sorted index list `a` precedes `b` lexicographically.
pub(crate) fn lex_less(a: &[usize], b: &[usize]) -> bool {
    a < b
}

/// Best integral subset with cost at most `b`; ties go to the lexicographically
/// smallest index list.
pub fn integral_optimum(market: &MarketInstance, b: f64) -> Result<(f64, Vec<usize>)> {
    let n = market.len();
    if n > INTEGRAL_LIMIT {
        return Err(Error::TooLarge { n, limit: INTEGRAL_LIMIT });
    }
    struct Search {
        costs: Vec<f64>,
        utils: Vec<f64>,
        b: f64,
        best: (f64, Vec<usize>),
        current: Vec<usize>,
    }
    impl Search {
        fn go(&mut self, i: usize, cost: f64, value: f64) {
            if i == self.costs.len() {
                if value > self.best.0 || (value == self.best.0 && lex_less(&self.current, &self.best.1)) {
                    self.best = (value, self.current.clone());
                }
                return;
            }
            let c = cost + self.costs[i];
            if crate::submodular::fits(c, self.b) {
                self.current.push(i);
                self.go(i + 1, c, value + self.utils[i]);
                self.current.pop();
            }
            self.go(i + 1, cost, value);
        }
    }
    let mut s =
        Search { costs: market.costs(), utils: market.utilities(), b, best: (0.0, Vec::new()), current: Vec::new() };
    s.go(0, 0.0, 0.0);
    Ok(s.best)
}

/// Integral optimum when every utility is equal: the cheapest sellers that fit.
/// Returns None if utilities differ.
pub fn integral_optimum_equal_utility(market: &MarketInstance, b: f64) -> Option<(f64, Vec<usize>)> {
    let u = market.sellers[0].utility;
    if market.sellers.iter().any(|s| s.utility != u) {
        return None;
    }
    let mut order: Vec<usize> = (0..market.len()).collect();
    order.sort_by(|&a, &c| market.sellers[a].cost.total_cmp(&market.sellers[c].cost).then(a.cmp(&c)));
    let mut spent = 0.0;
    let mut chosen = Vec::new();
    for i in order {
        let c = market.sellers[i].cost;
        if !crate::submodular::fits(spent + c, b) {
            break;
        }
        spent += c;
        chosen.push(i);
    }
    chosen.sort_unstable();
    Some((u * chosen.len() as f64, chosen))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcavityReport {
    pub holds: bool,
    /// Consecutive budgets whose midpoint value fell below the chord.
    pub witness: Option<(f64, f64)>,
}

/// Midpoint concavity of u* on consecutive grid pairs, tolerance 1e-9.
pub fn concavity_check(market: &MarketInstance, grid: &[f64]) -> Result<ConcavityReport> {
    if grid.len() < 3 {
        return Err(crate::error::invalid("grid", "need at least 3 budgets"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(crate::error::invalid("grid", "budgets must be ascending"));
    }
    for w in grid.windows(2) {
        let (b1, b2) = (w[0], w[1]);
        let mid = fractional_value(market, 0.5 * (b1 + b2));
        let chord = 0.5 * (fractional_value(market, b1) + fractional_value(market, b2));
        if mid < chord - 1e-9 {
            return Ok(ConcavityReport { holds: false, witness: Some((b1, b2)) });
        }
    }
    Ok(ConcavityReport { holds: true, witness: None })
}
