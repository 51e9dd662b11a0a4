// SPDX-License-Identifier: Apache-2.0

//! Budget-tight scaling (Envy-Free) and the truthful per-seller rescaling mechanism.

use std::collections::HashMap;

use crate::error::Result;
use crate::market::{MarketInstance, MechanismOutcome, OutcomeRates};
use crate::mechanism::{Mechanism, SellerResult};
use crate::numeric::{bisect_feasible, sup_feasible, Chebyshev};
use crate::payment::{payment, standard_unit_payment};
use crate::rules::StandardRule;

/// Relative tolerance of every rate solve.
pub const RATE_TOL: f64 = 1e-12;

/// Markets at least this large use the shared-model solver for per-seller rates.
pub const FAST_PATH_MIN_SELLERS: usize = 256;

/// Guaranteed ratio of Truthful(LogOptimal) against the divisible optimum
/// when no cost exceeds `theta` times the budget: (1 - 1/e)(1 - alpha theta)
/// with alpha = 1/(e - e^{1-1/e}).
pub fn large_market_floor(theta: f64) -> f64 {
    use std::f64::consts::E;
    let alpha = 1.0 / (E - (1.0 - 1.0 / E).exp());
    (1.0 - 1.0 / E) * (1.0 - alpha * theta)
}
const FAST_PATH_MAX_THETA: f64 = 0.25;
const CHEBYSHEV_NODES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleResult {
    pub r_star: f64,
    pub outcome: MechanismOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthfulResult {
    pub per_seller_rates: Vec<f64>,
    pub outcome: MechanismOutcome,
}

/// u r Q_1(c / (u r)): what a seller is paid at scaling r.
#[inline]
fn term(rule: &StandardRule, cost: f64, utility: f64, r: f64) -> f64 {
    payment(&rule.scaled(r), utility, cost)
}

/// T(r): total payment of the scaled rule f_r on the market.
pub fn total_payment_at(market: &MarketInstance, rule: &StandardRule, r: f64) -> f64 {
    market.sellers.iter().map(|s| term(rule, s.cost, s.utility, r)).sum()
}

/// The largest r whose total payment fits the budget.
pub fn budget_tight_rate(market: &MarketInstance, rule: &StandardRule) -> Result<f64> {
    sup_feasible(|r| total_payment_at(market, rule, r), market.budget, RATE_TOL)
}

pub fn run_envy_free(market: &MarketInstance, rule: &StandardRule) -> Result<ScaleResult> {
    let r_star = budget_tight_rate(market, rule)?;
    let scaled = rule.scaled(r_star);
    let allocations = market.sellers.iter().map(|s| scaled.eval(s.rate())).collect();
    let payments = market.sellers.iter().map(|s| payment(&scaled, s.utility, s.cost)).collect();
    let outcome = MechanismOutcome::additive(
        format!("envy-free({rule})"),
        allocations,
        payments,
        &market.utilities(),
        OutcomeRates::Uniform(r_star),
    );
    Ok(ScaleResult { r_star, outcome })
}

/// r_i: the budget-tight rate of the market in which seller `i` reports cost 0.
pub fn truthful_seller_rate(market: &MarketInstance, rule: &StandardRule, i: usize) -> Result<f64> {
    let s = market.sellers[i];
    sup_feasible(
        |r| {
            market
                .sellers
                .iter()
                .enumerate()
                .map(|(j, t)| if j == i { term(rule, 0.0, s.utility, r) } else { term(rule, t.cost, t.utility, r) })
                .sum()
        },
        market.budget,
        RATE_TOL,
    )
}

pub fn run_truthful(market: &MarketInstance, rule: &StandardRule) -> Result<TruthfulResult> {
    let theta = market.largeness_theta();
    let mut fast = if market.len() >= FAST_PATH_MIN_SELLERS && theta <= FAST_PATH_MAX_THETA {
        let r_star = budget_tight_rate(market, rule)?;
        Some(SharedModel::new(market, rule, r_star, theta))
    } else {
        None
    };
    let mut cache: HashMap<(u64, u64), f64> = HashMap::new();
    let mut rates = Vec::with_capacity(market.len());
    for (i, s) in market.sellers.iter().enumerate() {
        let key = (s.cost.to_bits(), s.utility.to_bits());
        let r = match cache.get(&key) {
            Some(&r) => r,
            None => {
                let r = match fast.as_mut() {
                    Some(model) => match model.seller_rate(i) {
                        Some(r) => r,
                        None => truthful_seller_rate(market, rule, i)?,
                    },
                    None => truthful_seller_rate(market, rule, i)?,
                };
                cache.insert(key, r);
                r
            }
        };
        rates.push(r);
    }
    Ok(truthful_from_rates(market, rule, rates))
}

fn truthful_from_rates(market: &MarketInstance, rule: &StandardRule, rates: Vec<f64>) -> TruthfulResult {
    let allocations = market.sellers.iter().zip(&rates).map(|(s, &r)| rule.scaled(r).eval(s.rate())).collect();
    let payments =
        market.sellers.iter().zip(&rates).map(|(s, &r)| payment(&rule.scaled(r), s.utility, s.cost)).collect();
    let outcome = MechanismOutcome::additive(
        format!("truthful({rule})"),
        allocations,
        payments,
        &market.utilities(),
        OutcomeRates::PerSeller(rates.clone()),
    );
    TruthfulResult { per_seller_rates: rates, outcome }
}

/// Shared approximation of the budget equation on [(1-θ) r*, r*], where every
/// per-seller rate must lie. Sellers whose payment term is analytic on the
/// whole bracket are folded into one Chebyshev interpolant; the rest are summed
/// exactly at every evaluation.
struct SharedModel<'a> {
    market: &'a MarketInstance,
    rule: &'a StandardRule,
    r_star: f64,
    lo: f64,
    hi: f64,
    smooth: Chebyshev,
    is_crossing: Vec<bool>,
    crossing: Vec<usize>,
    q0: f64,
}

impl<'a> SharedModel<'a> {
    fn new(market: &'a MarketInstance, rule: &'a StandardRule, r_star: f64, theta: f64) -> Self {
        let lo = (1.0 - theta) * r_star * (1.0 - 1e-9);
        let hi = r_star * (1.0 + 1e-9);
        let breaks = rule.breakpoints();
        let is_crossing: Vec<bool> = market
            .sellers
            .iter()
            .map(|s| {
                let x = s.rate();
                x > 0.0 && breaks.iter().any(|&b| b > 0.0 && x / hi <= b * (1.0 + 1e-9) && b * (1.0 - 1e-9) <= x / lo)
            })
            .collect();
        let crossing: Vec<usize> = (0..market.len()).filter(|&j| is_crossing[j]).collect();
        let smooth = Chebyshev::fit(lo, hi, CHEBYSHEV_NODES, |r| {
            market
                .sellers
                .iter()
                .zip(&is_crossing)
                .filter(|(_, &c)| !c)
                .map(|(s, _)| term(rule, s.cost, s.utility, r))
                .sum()
        });
        SharedModel {
            market,
            rule,
            r_star,
            lo,
            hi,
            smooth,
            is_crossing,
            crossing,
            q0: standard_unit_payment(rule, 0.0),
        }
    }

    fn total_with_zeroed(&self, i: usize, r: f64) -> f64 {
        let s = self.market.sellers[i];
        let mut t = self.smooth.eval(r) + s.utility * r * self.q0;
        if !self.is_crossing[i] {
            t -= term(self.rule, s.cost, s.utility, r);
        }
        for &j in &self.crossing {
            if j != i {
                let o = self.market.sellers[j];
                t += term(self.rule, o.cost, o.utility, r);
            }
        }
        t
    }

    /// None when the root is not bracketed; the caller then solves directly.
    fn seller_rate(&mut self, i: usize) -> Option<f64> {
        if self.market.sellers[i].cost == 0.0 {
            return Some(self.r_star);
        }
        let b = self.market.budget;
        if self.total_with_zeroed(i, self.lo) > b || self.total_with_zeroed(i, self.hi) <= b {
            return None;
        }
        Some(bisect_feasible(|r| self.total_with_zeroed(i, r), b, self.lo, self.hi, RATE_TOL))
    }
}

/// Mechanisms over divisible additive markets.
#[derive(Debug, Clone, PartialEq)]
pub enum DivisibleMechanism {
    EnvyFree(StandardRule),
    Truthful(StandardRule),
}

impl Mechanism<MarketInstance> for DivisibleMechanism {
    fn name(&self) -> String {
        match self {
            DivisibleMechanism::EnvyFree(r) => format!("envy-free({r})"),
            DivisibleMechanism::Truthful(r) => format!("truthful({r})"),
        }
    }

    fn run(&self, market: &MarketInstance) -> Result<MechanismOutcome> {
        Ok(match self {
            DivisibleMechanism::EnvyFree(rule) => run_envy_free(market, rule)?.outcome,
            DivisibleMechanism::Truthful(rule) => run_truthful(market, rule)?.outcome,
        })
    }

    fn seller_result(&self, market: &MarketInstance, i: usize) -> Result<SellerResult> {
        let (rule, r) = match self {
            DivisibleMechanism::EnvyFree(rule) => (rule, budget_tight_rate(market, rule)?),
            DivisibleMechanism::Truthful(rule) => (rule, truthful_seller_rate(market, rule, i)?),
        };
        let s = market.sellers[i];
        let scaled = rule.scaled(r);
        Ok(SellerResult { allocation: scaled.eval(s.rate()), payment: payment(&scaled, s.utility, s.cost) })
    }
}
