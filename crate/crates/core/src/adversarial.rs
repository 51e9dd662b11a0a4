// SPDX-License-Identifier: Apache-2.0

//! Upper-bound experiments: the hardness cost distribution with uniform posted
//! prices, and a convex-hull probe that builds two-group markets on which a
//! given rule's budget-tight mechanism performs poorly.

use std::f64::consts::E;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::divisible::{run_envy_free, run_truthful};
use crate::error::{invalid, Error, Result};
use crate::knapsack;
use crate::market::{MarketInstance, MechanismOutcome, OutcomeRates, Seller};
use crate::mechanism::{Mechanism, SellerResult};
use crate::numeric::bisect_feasible;
use crate::payment::standard_unit_payment;
use crate::rules::StandardRule;

/// Cost distribution with an atom of 1/e at 0 and CDF 1/(e(1-x)) on (0, 1-1/e].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HardnessDistribution;

impl HardnessDistribution {
    pub fn support_max(&self) -> f64 {
        1.0 - 1.0 / E
    }

    pub fn zero_mass(&self) -> f64 {
        1.0 / E
    }

    pub fn mean(&self) -> f64 {
        1.0 - 2.0 / E
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if x >= self.support_max() {
            1.0
        } else {
            1.0 / (E * (1.0 - x))
        }
    }

    /// Inverse-CDF draw from a uniform variate on [0, 1).
    pub fn quantile(&self, v: f64) -> f64 {
        if v <= 1.0 / E {
            0.0
        } else {
            (1.0 - 1.0 / (E * v)).min(self.support_max())
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// N unit-utility sellers with hardness costs and budget (1 - 2/e) N.
pub fn sample_hardness_market(n: usize, seed: u64) -> Result<MarketInstance> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    let d = HardnessDistribution;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sellers = (0..n).map(|_| Seller { cost: d.sample(&mut rng), utility: 1.0 }).collect();
    MarketInstance::new(d.mean() * n as f64, sellers)
}

/// Offers price `p` to everyone; sellers with cost at most `p` sell at `p`.
pub fn uniform_posted_price(market: &MarketInstance, p: f64) -> Result<MechanismOutcome> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(invalid("price", format!("must be finite and nonnegative, got {p}")));
    }
    let allocations: Vec<f64> = market.sellers.iter().map(|s| if s.cost <= p { 1.0 } else { 0.0 }).collect();
    let payments = allocations.iter().map(|&x| x * p).collect();
    Ok(MechanismOutcome::additive(
        format!("posted-price({p})"),
        allocations,
        payments,
        &market.utilities(),
        OutcomeRates::Uniform(p),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostedPrice(pub f64);

impl Mechanism<MarketInstance> for PostedPrice {
    fn name(&self) -> String {
        format!("posted-price({})", self.0)
    }

    fn run(&self, market: &MarketInstance) -> Result<MechanismOutcome> {
        uniform_posted_price(market, self.0)
    }

    fn seller_result(&self, market: &MarketInstance, i: usize) -> Result<SellerResult> {
        let won = market.sellers[i].cost <= self.0;
        Ok(SellerResult { allocation: if won { 1.0 } else { 0.0 }, payment: if won { self.0 } else { 0.0 } })
    }
}

/// p* = (e-2)/(e-1), the price at which p F(p) equals the mean cost.
pub fn budget_exhausting_price() -> f64 {
    (E - 2.0) / (E - 1.0)
}

/// p* found by bisection on p F(p) = 1 - 2/e over [0, 1 - 1/e].
pub fn budget_exhausting_price_numeric() -> f64 {
    let d = HardnessDistribution;
    bisect_feasible(|p| if p <= 0.0 { 0.0 } else { p * d.cdf(p) }, d.mean(), 0.0, d.support_max(), 1e-15)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardnessTrial {
    pub seed: u64,
    pub n: usize,
    pub budget: f64,
    pub total_cost: f64,
    pub posted_price_utility_per_seller: f64,
    pub posted_price_payment: f64,
    pub integral_optimum: f64,
    pub truthful_utility: f64,
    pub truthful_payment: f64,
    pub truthful_ratio: f64,
}

/// One hardness market: posted price p* and truthful log-optimal mechanism
/// against the integral optimum.
pub fn hardness_trial(n: usize, seed: u64) -> Result<HardnessTrial> {
    let market = sample_hardness_market(n, seed)?;
    let posted = uniform_posted_price(&market, budget_exhausting_price())?;
    let (opt, _) = knapsack::integral_optimum_equal_utility(&market, market.budget).expect("unit utilities");
    let truthful = run_truthful(&market, &StandardRule::LogOptimal)?.outcome;
    Ok(HardnessTrial {
        seed,
        n,
        budget: market.budget,
        total_cost: market.sellers.iter().map(|s| s.cost).sum(),
        posted_price_utility_per_seller: posted.total_utility / n as f64,
        posted_price_payment: posted.total_payment,
        integral_optimum: opt,
        truthful_utility: truthful.total_utility,
        truthful_payment: truthful.total_payment,
        truthful_ratio: if opt > 0.0 { truthful.total_utility / opt } else { 1.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePoint {
    pub cost: f64,
    pub allocation: f64,
    pub surplus: f64,
}

/// Points (f(c), Q_1(c) - c) for a unit-utility seller at scale 1, with the
/// upper concave envelope of their downward closure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RulePointCloud {
    pub samples: Vec<ProbePoint>,
    hull: Vec<ProbePoint>,
}

const HULL_TOL: f64 = 1e-12;

impl RulePointCloud {
    pub fn build(rule: &StandardRule, grid: &[f64]) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::DegenerateGrid("need at least two costs".into()));
        }
        if grid.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::DegenerateGrid("costs must be finite and nonnegative".into()));
        }
        let samples: Vec<ProbePoint> = grid
            .iter()
            .map(|&c| ProbePoint { cost: c, allocation: rule.eval(c), surplus: standard_unit_payment(rule, c) - c })
            .collect();
        let mut pts = samples.clone();
        pts.sort_by(|a, b| {
            a.allocation.total_cmp(&b.allocation).then(b.surplus.total_cmp(&a.surplus)).then(a.cost.total_cmp(&b.cost))
        });
        pts.dedup_by(|b, a| a.allocation == b.allocation);
        if pts.len() < 2 && pts[0].allocation == 0.0 {
            return Err(Error::DegenerateGrid("every cost lies beyond the support".into()));
        }
        let mut hull: Vec<ProbePoint> = Vec::new();
        for p in pts {
            while hull.len() >= 2 {
                let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (a.allocation - o.allocation) * (p.surplus - o.surplus)
                    - (a.surplus - o.surplus) * (p.allocation - o.allocation);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        Ok(RulePointCloud { samples, hull })
    }

    /// Vertices of the upper envelope, left to right.
    pub fn hull(&self) -> &[ProbePoint] {
        &self.hull
    }

    /// The hull edge containing allocation `x`, as (left, right) vertices.
    fn edge(&self, x: f64) -> Option<(ProbePoint, ProbePoint)> {
        let first = self.hull[0];
        let last = self.hull[self.hull.len() - 1];
        if x < first.allocation || x > last.allocation {
            return None;
        }
        if self.hull.len() == 1 {
            return Some((first, first));
        }
        let k = self.hull.partition_point(|p| p.allocation < x).clamp(1, self.hull.len() - 1);
        let (a, b) = (self.hull[k - 1], self.hull[k]);
        if b.allocation == x {
            return Some((b, b));
        }
        Some((a, b))
    }

    pub fn envelope(&self, x: f64) -> Option<f64> {
        let (a, b) = self.edge(x)?;
        if a.allocation == b.allocation {
            return Some(a.surplus.max(b.surplus));
        }
        Some(a.surplus + (b.surplus - a.surplus) * (x - a.allocation) / (b.allocation - a.allocation))
    }

    /// Whether (beta, 0) lies in the convex hull of the downward-closed cloud.
    pub fn contains(&self, beta: f64) -> bool {
        self.envelope(beta).is_some_and(|y| y >= -HULL_TOL)
    }

    /// Smallest beta with (beta, 0) in the hull.
    pub fn min_beta(&self) -> Option<f64> {
        let first = self.hull[0];
        if first.surplus >= -HULL_TOL {
            return Some(first.allocation);
        }
        self.hull.windows(2).find(|w| w[1].surplus >= 0.0).map(|w| {
            let (a, b) = (w[0], w[1]);
            a.allocation + (0.0 - a.surplus) * (b.allocation - a.allocation) / (b.surplus - a.surplus)
        })
    }
}

/// Costs 0..=1.5 x0 in `k` even steps plus every breakpoint of the rule.
pub fn default_probe_grid(rule: &StandardRule, k: usize) -> Vec<f64> {
    let top = 1.5 * rule.zero_point();
    let k = k.max(2);
    let mut grid: Vec<f64> = (0..k).map(|i| top * i as f64 / (k - 1) as f64).collect();
    grid.extend(rule.breakpoints());
    grid.push(rule.zero_point());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeProvenance {
    pub rule: String,
    pub beta: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub market: MarketInstance,
    pub provenance: ProbeProvenance,
}

/// Builds a two-group market on which the rule's budget-tight mechanism buys
/// about a beta fraction of what the optimum buys, or returns None when
/// (beta, 0) is outside the hull of the rule's point cloud.
pub fn worst_case_probe(rule: &StandardRule, beta: f64, grid: &[f64], m: usize) -> Result<Option<ProbeResult>> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
    }
    if m == 0 {
        return Err(invalid("group_scale", "must be positive"));
    }
    let cloud = RulePointCloud::build(rule, grid)?;
    if !cloud.contains(beta) {
        return Ok(None);
    }
    let (p1, p2) = cloud.edge(beta).expect("beta inside the hull range");
    let alpha =
        if p2.allocation > p1.allocation { (p2.allocation - beta) / (p2.allocation - p1.allocation) } else { 1.0 };
    let mut n1 = (alpha * m as f64).floor() as usize;
    let mut n2 = ((1.0 - alpha) * m as f64).floor() as usize;
    if n1 + n2 < m {
        if p1.cost <= p2.cost {
            n1 += m - n1 - n2;
        } else {
            n2 += m - n1 - n2;
        }
    }
    let mut sellers = vec![Seller { cost: p1.cost, utility: 1.0 }; n1];
    sellers.extend(std::iter::repeat_n(Seller { cost: p2.cost, utility: 1.0 }, n2));
    // Budget equal to the total payment at scale 1, summed as the solver sums it.
    let budget: f64 = sellers.iter().map(|s| standard_unit_payment(rule, s.cost)).sum();
    let market = MarketInstance::new(budget, sellers)?;
    Ok(Some(ProbeResult {
        market,
        provenance: ProbeProvenance { rule: rule.to_string(), beta, alpha, c1: p1.cost, c2: p2.cost, m, n1, n2 },
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeMeasurement {
    pub fractional_optimum: f64,
    pub envy_free_ratio: f64,
    pub truthful_ratio: f64,
}

/// Envy-Free and Truthful ratios of `rule` on a probe market against the divisible optimum.
pub fn measure_probe(rule: &StandardRule, market: &MarketInstance) -> Result<ProbeMeasurement> {
    let opt = knapsack::fractional_value(market, market.budget);
    let ef = run_envy_free(market, rule)?.outcome.total_utility;
    let tr = run_truthful(market, rule)?.outcome.total_utility;
    Ok(ProbeMeasurement { fractional_optimum: opt, envy_free_ratio: ef / opt, truthful_ratio: tr / opt })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn price_closed_form_matches_root() {
        let p = budget_exhausting_price();
        assert!((p - 0.418_02).abs() < 1e-5);
        let d = HardnessDistribution;
        assert!((p * d.cdf(p) - (1.0 - 2.0 / E)).abs() < 1e-12);
        assert!((d.cdf(p) - (1.0 - 1.0 / E)).abs() < 1e-12);
        assert!((budget_exhausting_price_numeric() - p).abs() < 1e-10);
    }

    #[test]
    fn cdf_endpoints() {
        let d = HardnessDistribution;
        assert!((d.cdf(0.0) - 1.0 / E).abs() < 1e-16);
        assert_eq!(d.cdf(d.support_max()), 1.0);
        assert_eq!(d.quantile(0.2), 0.0);
        assert!((d.quantile(0.999_999_999) - d.support_max()).abs() < 1e-8);
    }

    #[test]
    fn posted_price_edges() {
        let m = MarketInstance::from_parts(10.0, &[0.0, 0.3, 0.5], &[1.0; 3]).unwrap();
        let o = uniform_posted_price(&m, 0.0).unwrap();
        assert_eq!(o.allocations, vec![1.0, 0.0, 0.0]);
        let o = uniform_posted_price(&m, 0.5).unwrap();
        assert_eq!(o.total_payment, 1.5);
    }

    #[test]
    fn uniform_probe_builds_two_groups() {
        let rule = StandardRule::Uniform;
        let grid = default_probe_grid(&rule, 101);
        let res = worst_case_probe(&rule, 0.51, &grid, 1000).unwrap().unwrap();
        assert_eq!(res.provenance.c1, crate::rules::E_MINUS_1);
        assert_eq!(res.provenance.c2, 0.0);
        assert_eq!(res.provenance.n1 + res.provenance.n2, 1000);
        assert!(res.provenance.alpha > 0.48 && res.provenance.alpha < 0.5);
    }

    #[test]
    fn log_optimal_cloud_is_a_line() {
        let rule = StandardRule::LogOptimal;
        let cloud = RulePointCloud::build(&rule, &default_probe_grid(&rule, 501)).unwrap();
        let beta = cloud.min_beta().unwrap();
        assert!((beta - (1.0 - 1.0 / E)).abs() < 1e-9);
    }

    #[test]
    fn step_min_beta() {
        for t in [0.4, 0.5, 0.7] {
            let rule = StandardRule::step(t).unwrap();
            let cloud = RulePointCloud::build(&rule, &default_probe_grid(&rule, 201)).unwrap();
            let expect = t.min(1.0 / (1.0 + 2.0 * t - t * t));
            assert!((cloud.min_beta().unwrap() - expect).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(RulePointCloud::build(&StandardRule::Uniform, &[0.5]).is_err());
        assert!(RulePointCloud::build(&StandardRule::Uniform, &[0.5, f64::NAN]).is_err());
        assert!(RulePointCloud::build(&StandardRule::Uniform, &[5.0, 6.0]).is_err());
    }
}
