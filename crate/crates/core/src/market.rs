// SPDX-License-Identifier: Apache-2.0

//! Auction instances, mechanism outcomes and seeded instance generation.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::knapsack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seller {
    pub cost: f64,
    pub utility: f64,
}

impl Seller {
    pub fn new(cost: f64, utility: f64) -> Result<Self> {
        let s = Seller { cost, utility };
        s.validate(0)?;
        Ok(s)
    }

    /// Cost per unit of utility.
    pub fn rate(&self) -> f64 {
        self.cost / self.utility
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(Error::InvalidSeller {
                index,
                reason: format!("cost must be finite and nonnegative, got {}", self.cost),
            });
        }
        if !(self.utility.is_finite() && self.utility > 0.0) {
            return Err(Error::InvalidSeller {
                index,
                reason: format!("utility must be finite and positive, got {}", self.utility),
            });
        }
        if !self.rate().is_finite() {
            return Err(Error::InvalidSeller { index, reason: "rate overflows".into() });
        }
        Ok(())
    }
}

/// A procurement auction: sellers in their given order plus the buyer's budget.
/// The seller id is its index in `sellers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket")]
pub struct MarketInstance {
    pub budget: f64,
    pub sellers: Vec<Seller>,
}

#[derive(Deserialize)]
struct RawMarket {
    budget: f64,
    sellers: Vec<Seller>,
}

impl TryFrom<RawMarket> for MarketInstance {
    type Error = Error;
    fn try_from(raw: RawMarket) -> Result<Self> {
        MarketInstance::new(raw.budget, raw.sellers)
    }
}

impl MarketInstance {
    pub fn new(budget: f64, sellers: Vec<Seller>) -> Result<Self> {
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::InvalidBudget(budget));
        }
        if sellers.is_empty() {
            return Err(Error::EmptyMarket);
        }
        for (i, s) in sellers.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(MarketInstance { budget, sellers })
    }

    /// Builds a market from parallel cost and utility slices.
    pub fn from_parts(budget: f64, costs: &[f64], utilities: &[f64]) -> Result<Self> {
        if costs.len() != utilities.len() {
            return Err(Error::LengthMismatch { expected: costs.len(), actual: utilities.len() });
        }
        let sellers = costs.iter().zip(utilities).map(|(&cost, &utility)| Seller { cost, utility }).collect();
        MarketInstance::new(budget, sellers)
    }

    pub fn len(&self) -> usize {
        self.sellers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sellers.is_empty()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.sellers.iter().map(|s| s.cost).collect()
    }

    pub fn utilities(&self) -> Vec<f64> {
        self.sellers.iter().map(|s| s.utility).collect()
    }

    pub fn max_cost(&self) -> f64 {
        self.sellers.iter().map(|s| s.cost).fold(0.0, f64::max)
    }

    pub fn max_utility(&self) -> f64 {
        self.sellers.iter().map(|s| s.utility).fold(0.0, f64::max)
    }

    /// c_max / B.
    pub fn largeness_theta(&self) -> f64 {
        self.max_cost() / self.budget
    }

    /// u_max / U*, with U* the divisible optimum at the market budget.
    pub fn alt_theta(&self) -> f64 {
        let opt = knapsack::fractional_optimum(self, self.budget).value;
        if opt > 0.0 {
            self.max_utility() / opt
        } else {
            f64::INFINITY
        }
    }

    /// Copy of the market with seller `i` reporting `cost` instead.
    pub fn with_cost(&self, i: usize, cost: f64) -> Result<Self> {
        let mut m = self.clone();
        let s = m.sellers.get_mut(i).ok_or_else(|| invalid("seller", format!("no seller {i}")))?;
        s.cost = cost;
        s.validate(i)?;
        Ok(m)
    }

    pub fn with_budget(&self, budget: f64) -> Result<Self> {
        MarketInstance::new(budget, self.sellers.clone())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("market serializes")
    }
}

/// Internal rates a mechanism computed along the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum OutcomeRates {
    None,
    Uniform(f64),
    PerSeller(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub mechanism: String,
    pub allocations: Vec<f64>,
    pub payments: Vec<f64>,
    pub total_payment: f64,
    pub total_utility: f64,
    pub rates: OutcomeRates,
}

impl MechanismOutcome {
    /// Outcome for additive utilities: total utility is Σ u_i x_i.
    pub fn additive(
        mechanism: impl Into<String>,
        allocations: Vec<f64>,
        payments: Vec<f64>,
        utilities: &[f64],
        rates: OutcomeRates,
    ) -> Self {
        let total_utility = allocations.iter().zip(utilities).map(|(x, u)| x * u).sum();
        Self::with_value(mechanism, allocations, payments, total_utility, rates)
    }

    /// Outcome whose value is supplied by the caller (e.g. a submodular F of the winner set).
    pub fn with_value(
        mechanism: impl Into<String>,
        allocations: Vec<f64>,
        payments: Vec<f64>,
        total_utility: f64,
        rates: OutcomeRates,
    ) -> Self {
        let total_payment = payments.iter().sum();
        MechanismOutcome { mechanism: mechanism.into(), allocations, payments, total_payment, total_utility, rates }
    }

    pub fn len(&self) -> usize {
        self.allocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }
}

/// Σ u_i x_i of an outcome on a market.
pub fn fractional_value(outcome: &MechanismOutcome, market: &MarketInstance) -> Result<f64> {
    if outcome.allocations.len() != market.len() {
        return Err(Error::LengthMismatch { expected: market.len(), actual: outcome.allocations.len() });
    }
    Ok(outcome.allocations.iter().zip(&market.sellers).map(|(x, s)| x * s.utility).sum())
}

/// Parameters for [`generate_market`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub theta: f64,
    pub utility_min: f64,
    pub utility_max: f64,
}

impl GeneratorSpec {
    pub fn unit(n: usize, theta: f64) -> Self {
        GeneratorSpec { n, theta, utility_min: 1.0, utility_max: 1.0 }
    }

    pub fn generate(&self, seed: u64) -> Result<MarketInstance> {
        generate_market(self.n, self.theta, (self.utility_min, self.utility_max), seed)
    }
}

/// Random market with costs uniform on (0, 1], utilities uniform on the
/// closed range, and budget chosen so that c_max / B equals `theta`.
pub fn generate_market(n: usize, theta: f64, utility_range: (f64, f64), seed: u64) -> Result<MarketInstance> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid("theta", format!("must lie in (0, 1], got {theta}")));
    }
    let (lo, hi) = utility_range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(invalid("utility_range", format!("need 0 < lo <= hi, got [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sellers: Vec<Seller> = (0..n)
        .map(|_| {
            let cost = 1.0 - rng.random::<f64>();
            let utility = if lo == hi { lo } else { lo + (hi - lo) * rng.random::<f64>() };
            Seller { cost, utility }
        })
        .collect();
    let c_max = sellers.iter().map(|s| s.cost).fold(0.0, f64::max);
    MarketInstance::new(c_max / theta, sellers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_seller_theta_one_spends_its_cost() {
        let m = generate_market(1, 1.0, (1.0, 1.0), 3).unwrap();
        assert_eq!(m.budget, m.sellers[0].cost);
        assert_eq!(m.largeness_theta(), 1.0);
    }

    #[test]
    fn generated_theta_is_exact() {
        let m = generate_market(100, 1.0 / 20.0, (1.0, 1.0), 7).unwrap();
        assert!((m.largeness_theta() - 0.05).abs() <= 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_market(1000, 1.0 / 40.0, (0.5, 2.0), 42).unwrap();
        let b = generate_market(1000, 1.0 / 40.0, (0.5, 2.0), 42).unwrap();
        assert_eq!(a, b);
        let c = generate_market(1000, 1.0 / 40.0, (0.5, 2.0), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(generate_market(0, 0.1, (1.0, 1.0), 1).is_err());
        assert!(generate_market(5, 0.0, (1.0, 1.0), 1).is_err());
        assert!(generate_market(5, 0.1, (2.0, 1.0), 1).is_err());
        assert!(Seller::new(-1.0, 1.0).is_err());
        assert!(Seller::new(1.0, 0.0).is_err());
        assert!(MarketInstance::new(0.0, vec![Seller { cost: 1.0, utility: 1.0 }]).is_err());
        assert!(MarketInstance::new(1.0, vec![]).is_err());
    }

    #[test]
    fn fractional_value_sums() {
        let m = MarketInstance::from_parts(1.0, &[1.0, 1.0], &[1.0, 2.0]).unwrap();
        let o = MechanismOutcome::additive("x", vec![1.0, 1.0], vec![0.0, 0.0], &m.utilities(), OutcomeRates::None);
        assert_eq!(fractional_value(&o, &m).unwrap(), 3.0);
        let z = MechanismOutcome::additive("x", vec![0.0, 0.0], vec![0.0, 0.0], &m.utilities(), OutcomeRates::None);
        assert_eq!(fractional_value(&z, &m).unwrap(), 0.0);
        let short = MechanismOutcome::additive("x", vec![0.0], vec![0.0], &[1.0], OutcomeRates::None);
        assert!(fractional_value(&short, &m).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = MarketInstance::from_parts(13.0 / 3.0, &[2.0, 4.0], &[1.0, 1.0]).unwrap();
        let back = MarketInstance::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        assert!(MarketInstance::from_json(r#"{"budget": -1, "sellers": [{"cost": 1, "utility": 1}]}"#).is_err());
    }
}
