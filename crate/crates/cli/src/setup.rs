// SPDX-License-Identifier: Apache-2.0

//! Turns config sections into instances and runnable mechanisms.

use anyhow::{anyhow, bail, Context, Result};
use budgetmech::adversarial::{budget_exhausting_price, default_probe_grid, sample_hardness_market, worst_case_probe};
use budgetmech::audit::BudgetAllowance;
use budgetmech::divisible::{large_market_floor, run_envy_free, run_truthful, DivisibleMechanism};
use budgetmech::knapsack::fractional_value;
use budgetmech::rounding::truthful_rounder;
use budgetmech::submodular::{
    exhaustive_optimum, gamma_oracle, random_instance, strict_budget_wrapper, GammaMode, OptimumOracle, PaymentRule,
    SubmodularFamily, SubmodularInstance, SubmodularKind, SubmodularMechanism, EXHAUSTIVE_LIMIT, MAX_SELLERS,
};
use budgetmech::{generate_market, MarketInstance, Mechanism, MechanismOutcome, OutcomeRates, StandardRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{InstanceSource, MechanismConfig, MechanismKind};

#[derive(Debug, Clone)]
pub enum Instance {
    Market(MarketInstance),
    Submodular(SubmodularInstance),
}

impl Instance {
    pub fn n(&self) -> usize {
        match self {
            Instance::Market(m) => m.len(),
            Instance::Submodular(s) => s.n(),
        }
    }

    pub fn budget(&self) -> f64 {
        match self {
            Instance::Market(m) => m.budget,
            Instance::Submodular(s) => s.budget(),
        }
    }

    pub fn costs(&self) -> Vec<f64> {
        match self {
            Instance::Market(m) => m.costs(),
            Instance::Submodular(s) => s.costs().to_vec(),
        }
    }

    /// The submodular view: an additive market becomes an additive value function.
    pub fn as_submodular(&self) -> Result<SubmodularInstance> {
        match self {
            Instance::Submodular(s) => Ok(s.clone()),
            Instance::Market(m) => {
                if m.len() > MAX_SELLERS {
                    bail!("submodular mechanisms take at most {MAX_SELLERS} sellers, got {}", m.len());
                }
                Ok(SubmodularInstance::from_family(
                    m.costs(),
                    m.budget,
                    SubmodularFamily::Additive { utilities: m.utilities() },
                )?)
            }
        }
    }

    pub fn market(&self) -> Result<&MarketInstance> {
        match self {
            Instance::Market(m) => Ok(m),
            Instance::Submodular(_) => Err(anyhow!("this mechanism needs an additive market")),
        }
    }
}

/// Builds the instance for one trial; `seed` only matters for random sources.
pub fn build_instance(source: &InstanceSource, seed: u64) -> Result<Instance> {
    Ok(match source {
        InstanceSource::File { path } => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Instance::Market(MarketInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        InstanceSource::Generator { n, theta, utility_min, utility_max } => {
            Instance::Market(generate_market(*n, *theta, (*utility_min, *utility_max), seed)?)
        }
        InstanceSource::Hardness { n } => Instance::Market(sample_hardness_market(*n, seed)?),
        InstanceSource::Probe { rule, beta, m, grid_points } => {
            let rule = StandardRule::parse(rule)?;
            let grid = default_probe_grid(&rule, *grid_points);
            match worst_case_probe(&rule, *beta, &grid, *m)? {
                Some(p) => Instance::Market(p.market),
                None => bail!("({beta}, 0) lies outside the point-cloud hull of {rule}; no probe instance exists"),
            }
        }
        InstanceSource::SubmodularRandom { family, n, budget_fraction } => {
            Instance::Submodular(random_instance(*family, *n, *budget_fraction, seed)?)
        }
        InstanceSource::Submodular { costs, budget, value } => {
            Instance::Submodular(SubmodularInstance::from_family(costs.clone(), *budget, value.clone())?)
        }
    })
}

/// A configured mechanism, ready to run.
#[derive(Debug, Clone)]
pub enum Runner {
    Divisible(DivisibleMechanism),
    Rounded { rule: StandardRule, epsilon: f64 },
    Posted(f64),
    Submodular { mechanism: SubmodularMechanism, epsilon: f64 },
}

impl Runner {
    pub fn from_config(cfg: &MechanismConfig) -> Result<Self> {
        Ok(match cfg.name {
            MechanismKind::EnvyFree => Runner::Divisible(DivisibleMechanism::EnvyFree(cfg.parsed_rule()?)),
            MechanismKind::Truthful => Runner::Divisible(DivisibleMechanism::Truthful(cfg.parsed_rule()?)),
            MechanismKind::TruthfulRounded => Runner::Rounded { rule: cfg.parsed_rule()?, epsilon: cfg.epsilon },
            MechanismKind::PostedPrice => Runner::Posted(cfg.price.unwrap_or_else(budget_exhausting_price)),
            MechanismKind::Oracle | MechanismKind::Poly => {
                let base = if cfg.name == MechanismKind::Oracle {
                    SubmodularMechanism::oracle(cfg.oracle.into())
                } else {
                    SubmodularMechanism::poly()
                };
                Runner::Submodular { mechanism: base.with_payments(cfg.payments), epsilon: cfg.epsilon }
            }
        })
    }

    /// Same mechanism family with a different rule.
    pub fn with_rule(&self, rule: StandardRule) -> Self {
        match self {
            Runner::Divisible(DivisibleMechanism::EnvyFree(_)) => Runner::Divisible(DivisibleMechanism::EnvyFree(rule)),
            Runner::Divisible(DivisibleMechanism::Truthful(_)) => Runner::Divisible(DivisibleMechanism::Truthful(rule)),
            Runner::Rounded { epsilon, .. } => Runner::Rounded { rule, epsilon: *epsilon },
            other => other.clone(),
        }
    }

    pub fn rule(&self) -> Option<&StandardRule> {
        match self {
            Runner::Divisible(DivisibleMechanism::EnvyFree(r) | DivisibleMechanism::Truthful(r)) => Some(r),
            Runner::Rounded { rule, .. } => Some(rule),
            _ => None,
        }
    }

    /// Runs on `inst`; `rounding_seed` drives the rounding lottery.
    pub fn execute(&self, inst: &Instance, rounding_seed: u64) -> Result<Measured> {
        match self {
            Runner::Divisible(mech) => {
                let market = inst.market()?;
                let outcome = match mech {
                    DivisibleMechanism::EnvyFree(rule) => run_envy_free(market, rule)?.outcome,
                    DivisibleMechanism::Truthful(rule) => run_truthful(market, rule)?.outcome,
                };
                Ok(Measured::on_market(outcome, market))
            }
            Runner::Rounded { rule, epsilon } => {
                let market = inst.market()?;
                let (res, rounder) = truthful_rounder(market, rule, *epsilon)?;
                let sample = rounder.sample(&mut ChaCha8Rng::seed_from_u64(rounding_seed));
                let allocations = sample.allocation.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                let outcome = MechanismOutcome::additive(
                    format!("truthful-rounded({rule})"),
                    allocations,
                    sample.payments,
                    &market.utilities(),
                    OutcomeRates::PerSeller(res.per_seller_rates),
                );
                Ok(Measured::on_market(outcome, market))
            }
            Runner::Posted(p) => {
                let market = inst.market()?;
                Ok(Measured::on_market(budgetmech::adversarial::uniform_posted_price(market, *p)?, market))
            }
            Runner::Submodular { mechanism, epsilon } => {
                let sub = inst.as_submodular()?;
                let outcome = if *epsilon > 0.0 {
                    strict_budget_wrapper(mechanism, &sub, *epsilon)?
                } else {
                    mechanism.run(&sub)?
                };
                let (benchmark, kind) = submodular_benchmark(&sub)?;
                let theta = if benchmark > 0.0 { sub.max_singleton() / benchmark } else { f64::INFINITY };
                Ok(Measured { outcome, benchmark, benchmark_kind: kind, theta, equal_utilities: false })
            }
        }
    }

    /// Ratio floor the mechanism guarantees on `m`, when one is known.
    pub fn ratio_floor(&self, m: &Measured) -> Option<f64> {
        match self {
            Runner::Divisible(DivisibleMechanism::EnvyFree(StandardRule::LogOptimal)) => {
                Some(1.0 - 1.0 / std::f64::consts::E)
            }
            Runner::Divisible(DivisibleMechanism::Truthful(StandardRule::LogOptimal)) if m.equal_utilities => {
                Some(large_market_floor(m.theta)).filter(|f| *f > 0.0)
            }
            Runner::Submodular { mechanism, epsilon: _ } if m.benchmark_kind == "exhaustive" => match mechanism.kind {
                SubmodularKind::Oracle(OptimumOracle::Exhaustive) => Some(0.5 - m.theta),
                SubmodularKind::Poly => Some(1.0 / 3.0 - m.theta),
                _ => None,
            }
            .filter(|f| *f > 0.0),
            _ => None,
        }
    }

    /// How far payments may exceed the budget.
    pub fn allowance(&self, m: &Measured, max_win_payment: f64) -> BudgetAllowance {
        let unbounded = BudgetAllowance::Factor(f64::INFINITY);
        match self {
            Runner::Divisible(_) => BudgetAllowance::Strict,
            Runner::Rounded { .. } => BudgetAllowance::Additive(max_win_payment),
            Runner::Posted(_) => unbounded,
            Runner::Submodular { epsilon, .. } if *epsilon > 0.0 => BudgetAllowance::Strict,
            Runner::Submodular { mechanism, .. } if m.benchmark_kind == "exhaustive" => {
                let denom = match mechanism.kind {
                    SubmodularKind::Oracle(OptimumOracle::Exhaustive) => 1.0 - m.theta,
                    SubmodularKind::Poly => 1.0 - 3.0 * m.theta,
                    _ => 0.0,
                };
                if denom > 0.0 {
                    BudgetAllowance::Factor(1.0 / denom)
                } else {
                    unbounded
                }
            }
            Runner::Submodular { .. } => unbounded,
        }
    }

    pub fn is_critical(&self) -> bool {
        matches!(self, Runner::Submodular { mechanism, .. } if mechanism.payments == PaymentRule::CriticalCost)
    }
}

/// Exhaustive optimum when affordable, otherwise the greedy estimate.
pub fn submodular_benchmark(sub: &SubmodularInstance) -> Result<(f64, &'static str)> {
    if sub.active_count() <= EXHAUSTIVE_LIMIT {
        Ok((exhaustive_optimum(sub, sub.budget())?.0, "exhaustive"))
    } else {
        Ok((gamma_oracle(sub, sub.budget(), GammaMode::Greedy).0, "greedy"))
    }
}

/// An outcome with its benchmark and largeness.
#[derive(Debug, Clone)]
pub struct Measured {
    pub outcome: MechanismOutcome,
    pub benchmark: f64,
    pub benchmark_kind: &'static str,
    /// c_max / B for markets, u_max / F* for submodular instances.
    pub theta: f64,
    /// Every seller has the same utility.
    pub equal_utilities: bool,
}

impl Measured {
    fn on_market(outcome: MechanismOutcome, market: &MarketInstance) -> Self {
        Measured {
            outcome,
            benchmark: fractional_value(market, market.budget),
            benchmark_kind: "fractional",
            theta: market.largeness_theta(),
            equal_utilities: market.sellers.iter().all(|s| s.utility == market.sellers[0].utility),
        }
    }

    pub fn ratio(&self) -> f64 {
        if self.benchmark > 0.0 {
            self.outcome.total_utility / self.benchmark
        } else {
            1.0
        }
    }

    /// Smallest and largest rate paid to a seller with positive allocation.
    pub fn rate_range(&self) -> (Option<f64>, Option<f64>) {
        match &self.outcome.rates {
            OutcomeRates::None => (None, None),
            OutcomeRates::Uniform(r) => (Some(*r), Some(*r)),
            OutcomeRates::PerSeller(v) => {
                let live = v.iter().zip(&self.outcome.allocations).filter(|(_, &x)| x > 0.0).map(|(&r, _)| r);
                let (lo, hi) = live.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
                if lo.is_finite() {
                    (Some(lo), Some(hi))
                } else {
                    (None, None)
                }
            }
        }
    }
}
