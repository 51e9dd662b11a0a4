// SPDX-License-Identifier: Apache-2.0

//! Mechanisms for monotone submodular utilities: greedy sequences, exhaustive
//! and polynomial optimum oracles, the oracle mechanism, the stopping-rate
//! mechanism, critical-cost payments and a strict-budget wrapper.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::market::{MechanismOutcome, OutcomeRates};
use crate::mechanism::{Mechanism, Procurement, SellerResult};

/// Largest ground set representable as a bitmask.
pub const MAX_SELLERS: usize = 63;
/// Ground sets up to this size get a full value table.
pub const MEMO_LIMIT: usize = 20;
/// Largest ground set the exhaustive optimum accepts.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// Set function over seller bitmasks. Must be pure.
pub trait ValueOracle: Send + Sync + fmt::Debug {
    fn ground_size(&self) -> usize;
    fn value(&self, set: u64) -> f64;
    /// Serializable description, used in audit witnesses.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConcaveTransform {
    Sqrt,
    Log1p,
    Capped { cap: f64 },
}

impl ConcaveTransform {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            ConcaveTransform::Sqrt => x.sqrt(),
            ConcaveTransform::Log1p => x.ln_1p(),
            ConcaveTransform::Capped { cap } => x.min(*cap),
        }
    }
}

/// Built-in value functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum SubmodularFamily {
    Additive {
        utilities: Vec<f64>,
    },
    /// Weighted coverage: F(T) is the total weight of universe elements
    /// covered by the sets of T. Missing weights default to 1.
    Coverage {
        sets: Vec<Vec<usize>>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    ConcaveOverAdditive {
        utilities: Vec<f64>,
        transform: ConcaveTransform,
    },
}

impl SubmodularFamily {
    pub fn into_oracle(self) -> Result<Arc<dyn ValueOracle>> {
        Ok(match self {
            SubmodularFamily::Coverage { sets, weights } => Arc::new(CoverageOracle::new(sets, weights)?),
            other => {
                if let SubmodularFamily::Additive { utilities }
                | SubmodularFamily::ConcaveOverAdditive { utilities, .. } = &other
                {
                    if utilities.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
                        return Err(invalid("utilities", "must be finite and nonnegative"));
                    }
                }
                Arc::new(other)
            }
        })
    }
}

fn masked_sum(values: &[f64], set: u64) -> f64 {
    bits(set).map(|i| values[i]).sum()
}

impl ValueOracle for SubmodularFamily {
    fn ground_size(&self) -> usize {
        match self {
            SubmodularFamily::Additive { utilities } | SubmodularFamily::ConcaveOverAdditive { utilities, .. } => {
                utilities.len()
            }
            SubmodularFamily::Coverage { sets, .. } => sets.len(),
        }
    }

    fn value(&self, set: u64) -> f64 {
        match self {
            SubmodularFamily::Additive { utilities } => masked_sum(utilities, set),
            SubmodularFamily::ConcaveOverAdditive { utilities, transform } => {
                transform.apply(masked_sum(utilities, set))
            }
            SubmodularFamily::Coverage { .. } => unreachable!("coverage is evaluated through CoverageOracle"),
        }
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// Coverage function with sets stored as bitsets over the universe.
#[derive(Debug, Clone)]
pub struct CoverageOracle {
    family: SubmodularFamily,
    words: Vec<Vec<u64>>,
    weights: Vec<f64>,
}

impl CoverageOracle {
    pub fn new(sets: Vec<Vec<usize>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let universe = sets.iter().flatten().map(|&e| e + 1).max().unwrap_or(0);
        let universe = weights.as_ref().map_or(universe, |w| w.len().max(universe));
        let weight_vec = match &weights {
            Some(w) if w.len() < universe => return Err(invalid("weights", "fewer weights than universe elements")),
            Some(w) if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) => {
                return Err(invalid("weights", "must be finite and nonnegative"))
            }
            Some(w) => w.clone(),
            None => vec![1.0; universe],
        };
        let n_words = universe.div_ceil(64);
        let words = sets
            .iter()
            .map(|s| {
                let mut w = vec![0u64; n_words];
                for &e in s {
                    w[e / 64] |= 1 << (e % 64);
                }
                w
            })
            .collect();
        Ok(CoverageOracle { family: SubmodularFamily::Coverage { sets, weights }, words, weights: weight_vec })
    }
}

impl ValueOracle for CoverageOracle {
    fn ground_size(&self) -> usize {
        self.words.len()
    }

    fn value(&self, set: u64) -> f64 {
        let n_words = self.weights.len().div_ceil(64);
        let mut covered = vec![0u64; n_words];
        for i in bits(set) {
            for (c, w) in covered.iter_mut().zip(&self.words[i]) {
                *c |= w;
            }
        }
        let mut total = 0.0;
        for (wi, word) in covered.iter().enumerate() {
            for b in bits(*word) {
                total += self.weights[wi * 64 + b];
            }
        }
        total
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(&self.family).unwrap_or(serde_json::Value::Null)
    }
}

/// Wraps an arbitrary closure as a value oracle.
pub struct FnOracle<F> {
    n: usize,
    f: F,
}

impl<F: Fn(u64) -> f64 + Send + Sync> FnOracle<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnOracle { n, f }
    }
}

impl<F> fmt::Debug for FnOracle<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnOracle(n = {})", self.n)
    }
}

impl<F: Fn(u64) -> f64 + Send + Sync> ValueOracle for FnOracle<F> {
    fn ground_size(&self) -> usize {
        self.n
    }

    fn value(&self, set: u64) -> f64 {
        (self.f)(set)
    }
}

/// Indices of the set bits, ascending.
pub fn bits(mut set: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if set == 0 {
            None
        } else {
            let i = set.trailing_zeros() as usize;
            set &= set - 1;
            Some(i)
        }
    })
}

pub fn to_indices(set: u64) -> Vec<usize> {
    bits(set).collect()
}

pub fn to_mask(indices: &[usize]) -> u64 {
    indices.iter().fold(0, |m, &i| m | (1 << i))
}

/// Subset cost checks allow this much relative rounding slack.
pub const COST_SLACK: f64 = 1e-12;

/// `cost <= b` up to rounding in the summation of costs.
pub fn fits(cost: f64, b: f64) -> bool {
    cost <= b + COST_SLACK * b.abs().max(1.0)
}

/// Lexicographic order on the sorted index lists of two sets.
fn lex_less(a: u64, b: u64) -> bool {
    to_indices(a) < to_indices(b)
}

/// Ground set, costs, value oracle and budget. Sellers can be removed without
/// renumbering; removed sellers never appear in any solution.
#[derive(Clone)]
pub struct SubmodularInstance {
    costs: Vec<f64>,
    budget: f64,
    oracle: Arc<dyn ValueOracle>,
    active: u64,
    empty_value: f64,
    table: Arc<OnceLock<Vec<f64>>>,
}

impl fmt::Debug for SubmodularInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubmodularInstance")
            .field("costs", &self.costs)
            .field("budget", &self.budget)
            .field("active", &format_args!("{:#b}", self.active))
            .field("oracle", &self.oracle)
            .finish()
    }
}

impl SubmodularInstance {
    pub fn new(costs: Vec<f64>, budget: f64, oracle: Arc<dyn ValueOracle>) -> Result<Self> {
        let n = costs.len();
        if n == 0 {
            return Err(Error::EmptyMarket);
        }
        if n > MAX_SELLERS {
            return Err(Error::TooLarge { n, limit: MAX_SELLERS });
        }
        if oracle.ground_size() != n {
            return Err(Error::LengthMismatch { expected: n, actual: oracle.ground_size() });
        }
        for (index, &c) in costs.iter().enumerate() {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidSeller {
                    index,
                    reason: format!("cost must be finite and nonnegative, got {c}"),
                });
            }
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::InvalidBudget(budget));
        }
        let empty_value = oracle.value(0);
        let active = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        Ok(SubmodularInstance { costs, budget, oracle, active, empty_value, table: Arc::new(OnceLock::new()) })
    }

    pub fn from_family(costs: Vec<f64>, budget: f64, family: SubmodularFamily) -> Result<Self> {
        SubmodularInstance::new(costs, budget, family.into_oracle()?)
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn oracle(&self) -> &Arc<dyn ValueOracle> {
        &self.oracle
    }

    /// Bitmask of sellers still present.
    pub fn active(&self) -> u64 {
        self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.count_ones() as usize
    }

    pub fn with_budget(&self, budget: f64) -> Result<Self> {
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::InvalidBudget(budget));
        }
        let mut s = self.clone();
        s.budget = budget;
        Ok(s)
    }

    pub fn with_cost(&self, i: usize, cost: f64) -> Result<Self> {
        if i >= self.n() {
            return Err(invalid("seller", format!("no seller {i}")));
        }
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(Error::InvalidSeller {
                index: i,
                reason: format!("cost must be finite and nonnegative, got {cost}"),
            });
        }
        let mut s = self.clone();
        s.costs[i] = cost;
        Ok(s)
    }

    /// The instance without seller `i`.
    pub fn without(&self, i: usize) -> Self {
        let mut s = self.clone();
        s.active &= !(1u64 << i);
        s
    }

    /// F(T) - F(∅).
    pub fn value(&self, set: u64) -> f64 {
        if self.n() <= MEMO_LIMIT {
            let table = self
                .table
                .get_or_init(|| (0..(1u64 << self.n())).map(|s| self.oracle.value(s) - self.empty_value).collect());
            table[set as usize]
        } else {
            self.oracle.value(set) - self.empty_value
        }
    }

    pub fn cost_of(&self, set: u64) -> f64 {
        bits(set).map(|i| self.costs[i]).sum()
    }

    /// Largest singleton value among present sellers.
    pub fn max_singleton(&self) -> f64 {
        bits(self.active).map(|i| self.value(1 << i)).fold(0.0, f64::max)
    }

    /// u_max / F* for a given optimum value.
    pub fn theta(&self, f_star: f64) -> f64 {
        if f_star > 0.0 {
            self.max_singleton() / f_star
        } else {
            f64::INFINITY
        }
    }
}

impl Procurement for SubmodularInstance {
    fn seller_count(&self) -> usize {
        self.n()
    }

    fn cost(&self, i: usize) -> f64 {
        self.costs[i]
    }

    fn budget(&self) -> f64 {
        self.budget
    }

    fn with_report(&self, i: usize, cost: f64) -> Result<Self> {
        self.with_cost(i, cost)
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "budget": self.budget,
            "costs": self.costs,
            "active": to_indices(self.active),
            "value": self.oracle.describe(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyOrdering {
    /// Smallest cost per marginal gain first.
    #[default]
    ByRate,
    /// Largest marginal gain first, ignoring costs.
    ByMarginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedySequence {
    pub order: Vec<usize>,
    pub prefix_values: Vec<f64>,
    pub marginals: Vec<f64>,
}

impl GreedySequence {
    /// c_{x_k} / ∂_k for the k-th element (0-based); infinite for zero gains.
    pub fn rate(&self, inst: &SubmodularInstance, k: usize) -> f64 {
        if self.marginals[k] > 0.0 {
            inst.costs[self.order[k]] / self.marginals[k]
        } else {
            f64::INFINITY
        }
    }

    /// Number of leading elements with positive marginal gain.
    pub fn positive_len(&self) -> usize {
        self.marginals.iter().take_while(|&&m| m > 0.0).count()
    }

    pub fn prefix_mask(&self, k: usize) -> u64 {
        self.order[..k].iter().fold(0, |m, &i| m | (1 << i))
    }
}

/// Greedy ordering of the present sellers; ties go to the lowest index.
/// Sellers whose marginal gain is 0 are appended last in index order.
pub fn greedy_sequence(inst: &SubmodularInstance, ordering: GreedyOrdering) -> GreedySequence {
    let mut remaining = inst.active;
    let mut chosen = 0u64;
    let mut current = 0.0;
    let mut seq = GreedySequence { order: Vec::new(), prefix_values: Vec::new(), marginals: Vec::new() };
    while remaining != 0 {
        let mut best: Option<(usize, f64, f64)> = None;
        for s in bits(remaining) {
            let v = inst.value(chosen | (1 << s));
            let gain = v - current;
            if gain <= 0.0 {
                continue;
            }
            let better = match (ordering, best) {
                (_, None) => true,
                (GreedyOrdering::ByRate, Some((b, bv, _))) => inst.costs[s] * (bv - current) < inst.costs[b] * gain,
                (GreedyOrdering::ByMarginal, Some((_, bv, _))) => v > bv,
            };
            if better {
                best = Some((s, v, gain));
            }
        }
        match best {
            Some((s, v, gain)) => {
                seq.order.push(s);
                seq.marginals.push(gain);
                seq.prefix_values.push(v);
                chosen |= 1 << s;
                remaining &= !(1 << s);
                current = v;
            }
            None => {
                for s in bits(remaining) {
                    seq.order.push(s);
                    seq.marginals.push(0.0);
                    seq.prefix_values.push(current);
                }
                break;
            }
        }
    }
    seq
}

/// Exact best feasible subset of the present sellers with cost at most `b`;
/// ties go to the lexicographically smallest index list.
pub fn exhaustive_optimum(inst: &SubmodularInstance, b: f64) -> Result<(f64, Vec<usize>)> {
    let (v, m) = exhaustive_mask(inst, b)?;
    Ok((v, to_indices(m)))
}

fn exhaustive_mask(inst: &SubmodularInstance, b: f64) -> Result<(f64, u64)> {
    let n = inst.active_count();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge { n, limit: EXHAUSTIVE_LIMIT });
    }
    let items: Vec<usize> = bits(inst.active).collect();
    let mut best = (inst.value(0), 0u64);
    fn go(inst: &SubmodularInstance, items: &[usize], k: usize, set: u64, cost: f64, b: f64, best: &mut (f64, u64)) {
        if k == items.len() {
            let v = inst.value(set);
            if v > best.0 || (v == best.0 && lex_less(set, best.1)) {
                *best = (v, set);
            }
            return;
        }
        let i = items[k];
        let c = cost + inst.costs[i];
        if fits(c, b) {
            go(inst, items, k + 1, set | (1 << i), c, b, best);
        }
        go(inst, items, k + 1, set, cost, b, best);
    }
    go(inst, &items, 0, 0, 0.0, b, &mut best);
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// Best of the rate-greedy fill and the best affordable singleton.
    #[default]
    Greedy,
    /// Also tries every affordable seed of up to three sellers, each completed greedily.
    PartialEnumeration,
}

/// Extends `seed` greedily by cost per marginal gain among sellers that still fit.
fn greedy_fill(inst: &SubmodularInstance, b: f64, seed: u64) -> u64 {
    let mut set = seed;
    let mut left = b - inst.cost_of(seed);
    let mut current = inst.value(set);
    loop {
        let mut best: Option<(usize, f64)> = None;
        for s in bits(inst.active & !set) {
            if !fits(inst.costs[s], left) {
                continue;
            }
            let gain = inst.value(set | (1 << s)) - current;
            if gain <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bs, bg)) => inst.costs[s] * bg < inst.costs[bs] * gain,
            };
            if better {
                best = Some((s, gain));
            }
        }
        match best {
            Some((s, _)) => {
                set |= 1 << s;
                left -= inst.costs[s];
                current = inst.value(set);
            }
            None => return set,
        }
    }
}

/// Polynomial-time approximate optimum with budget `b`.
pub fn gamma_oracle(inst: &SubmodularInstance, b: f64, mode: GammaMode) -> (f64, Vec<usize>) {
    let (v, m) = gamma_mask(inst, b, mode);
    (v, to_indices(m))
}

fn gamma_mask(inst: &SubmodularInstance, b: f64, mode: GammaMode) -> (f64, u64) {
    let mut best = (inst.value(0), 0u64);
    let mut consider = |set: u64| {
        let v = inst.value(set);
        if v > best.0 || (v == best.0 && lex_less(set, best.1)) {
            best = (v, set);
        }
    };
    consider(greedy_fill(inst, b, 0));
    let items: Vec<usize> = bits(inst.active).filter(|&i| fits(inst.costs[i], b)).collect();
    for &i in &items {
        consider(1 << i);
    }
    if mode == GammaMode::PartialEnumeration {
        for (a, &i) in items.iter().enumerate() {
            consider(greedy_fill(inst, b, 1 << i));
            for (bi, &j) in items.iter().enumerate().skip(a + 1) {
                let pair = (1u64 << i) | (1 << j);
                if fits(inst.cost_of(pair), b) {
                    consider(greedy_fill(inst, b, pair));
                    for &k in items.iter().skip(bi + 1) {
                        let triple = pair | (1 << k);
                        if fits(inst.cost_of(triple), b) {
                            consider(greedy_fill(inst, b, triple));
                        }
                    }
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "mode")]
pub enum OptimumOracle {
    Exhaustive,
    Gamma(GammaMode),
}

impl OptimumOracle {
    pub fn solve(&self, inst: &SubmodularInstance, b: f64) -> Result<(f64, u64)> {
        match self {
            OptimumOracle::Exhaustive => exhaustive_mask(inst, b),
            OptimumOracle::Gamma(mode) => Ok(gamma_mask(inst, b, *mode)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRate {
    /// b / F(χ_k), or +∞ when no prefix qualifies.
    pub rate: f64,
    pub prefix_len: usize,
}

/// Stopping rate at budget `b`: b / F(χ_k) for the largest k with
/// F(χ_k) c_{x_k} / ∂_k <= b.
pub fn stopping_rate(inst: &SubmodularInstance, b: f64, ordering: GreedyOrdering) -> StoppingRate {
    let seq = greedy_sequence(inst, ordering);
    stopping_rate_of(inst, &seq, b)
}

fn stopping_rate_of(inst: &SubmodularInstance, seq: &GreedySequence, b: f64) -> StoppingRate {
    let k = (0..seq.positive_len()).rev().find(|&k| seq.prefix_values[k] * seq.rate(inst, k) <= b).map_or(0, |k| k + 1);
    if k == 0 {
        StoppingRate { rate: f64::INFINITY, prefix_len: 0 }
    } else {
        StoppingRate { rate: b / seq.prefix_values[k - 1], prefix_len: k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubmodularKind {
    /// Winners: largest prefix with value at most F*/2; pays 2 r_i ∂_i with r_i = B / F*_{-i}.
    Oracle(OptimumOracle),
    /// Winners: largest prefix with F(χ_k) c/∂ <= B/2; pays r_i ∂_i with r_i the
    /// stopping rate of the instance without i at budget B/2.
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaymentRule {
    #[default]
    Original,
    CriticalCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmodularMechanism {
    pub kind: SubmodularKind,
    pub ordering: GreedyOrdering,
    pub payments: PaymentRule,
}

/// Winner set of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub sequence: GreedySequence,
    pub winners: usize,
    pub f_star: Option<f64>,
}

impl Selection {
    pub fn winner_mask(&self) -> u64 {
        self.sequence.prefix_mask(self.winners)
    }

    /// Position of seller `i` in the winning prefix.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.sequence.order[..self.winners].iter().position(|&s| s == i)
    }
}

const CRITICAL_ITERATIONS: usize = 60;

impl SubmodularMechanism {
    pub fn oracle(oracle: OptimumOracle) -> Self {
        SubmodularMechanism {
            kind: SubmodularKind::Oracle(oracle),
            ordering: GreedyOrdering::ByRate,
            payments: PaymentRule::Original,
        }
    }

    pub fn poly() -> Self {
        SubmodularMechanism {
            kind: SubmodularKind::Poly,
            ordering: GreedyOrdering::ByRate,
            payments: PaymentRule::Original,
        }
    }

    pub fn with_payments(mut self, payments: PaymentRule) -> Self {
        self.payments = payments;
        self
    }

    pub fn with_ordering(mut self, ordering: GreedyOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn select(&self, inst: &SubmodularInstance) -> Result<Selection> {
        let sequence = greedy_sequence(inst, self.ordering);
        let positive = sequence.positive_len();
        let (winners, f_star) = match self.kind {
            SubmodularKind::Oracle(oracle) => {
                let (f_star, _) = oracle.solve(inst, inst.budget)?;
                let k = if f_star > 0.0 {
                    (0..positive).rev().find(|&k| sequence.prefix_values[k] <= 0.5 * f_star).map_or(0, |k| k + 1)
                } else {
                    0
                };
                (k, Some(f_star))
            }
            SubmodularKind::Poly => (stopping_rate_of(inst, &sequence, 0.5 * inst.budget).prefix_len, None),
        };
        Ok(Selection { sequence, winners, f_star })
    }

    pub fn is_winner(&self, inst: &SubmodularInstance, i: usize) -> Result<bool> {
        Ok(self.select(inst)?.position(i).is_some())
    }

    /// The rate r_i behind the original payment of winner `i`.
    fn removal_rate(&self, inst: &SubmodularInstance, i: usize) -> Result<f64> {
        let rest = inst.without(i);
        Ok(match self.kind {
            SubmodularKind::Oracle(oracle) => {
                let (f, _) = oracle.solve(&rest, inst.budget)?;
                if f > 0.0 {
                    inst.budget / f
                } else {
                    f64::INFINITY
                }
            }
            SubmodularKind::Poly => stopping_rate(&rest, 0.5 * inst.budget, self.ordering).rate,
        })
    }

    /// Payment by the mechanism's own formula: 2 r_i ∂_i or r_i ∂_i.
    pub fn original_payment(&self, inst: &SubmodularInstance, sel: &Selection, i: usize) -> Result<Option<f64>> {
        let Some(k) = sel.position(i) else { return Ok(Some(0.0)) };
        let r = self.removal_rate(inst, i)?;
        if !r.is_finite() {
            return Ok(None);
        }
        let factor = match self.kind {
            SubmodularKind::Oracle(_) => 2.0,
            SubmodularKind::Poly => 1.0,
        };
        Ok(Some(factor * r * sel.sequence.marginals[k]))
    }

    /// Largest report in [c_i, B] that keeps winner `i` winning, by bisection.
    pub fn critical_payment(&self, inst: &SubmodularInstance, i: usize) -> Result<f64> {
        let c = inst.costs[i];
        let b = inst.budget;
        if !self.is_winner(inst, i)? {
            return Ok(0.0);
        }
        if c >= b || self.is_winner(&inst.with_cost(i, b)?, i)? {
            return Ok(b.max(c));
        }
        let (mut lo, mut hi) = (c, b);
        for _ in 0..CRITICAL_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if self.is_winner(&inst.with_cost(i, mid)?, i)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    fn payment_for(&self, inst: &SubmodularInstance, sel: &Selection, i: usize) -> Result<f64> {
        if sel.position(i).is_none() {
            return Ok(0.0);
        }
        match self.payments {
            PaymentRule::CriticalCost => self.critical_payment(inst, i),
            PaymentRule::Original => match self.original_payment(inst, sel, i)? {
                Some(p) => Ok(p),
                None => self.critical_payment(inst, i),
            },
        }
    }

    fn label(&self) -> String {
        let kind = match self.kind {
            SubmodularKind::Oracle(OptimumOracle::Exhaustive) => "oracle(exhaustive)".to_string(),
            SubmodularKind::Oracle(OptimumOracle::Gamma(GammaMode::Greedy)) => "oracle(gamma)".to_string(),
            SubmodularKind::Oracle(OptimumOracle::Gamma(GammaMode::PartialEnumeration)) => {
                "oracle(gamma-enum)".to_string()
            }
            SubmodularKind::Poly => "poly".to_string(),
        };
        let mut s = kind;
        if self.ordering == GreedyOrdering::ByMarginal {
            s.push_str("+by-marginal");
        }
        if self.payments == PaymentRule::CriticalCost {
            s.push_str("+critical");
        }
        s
    }
}

impl Mechanism<SubmodularInstance> for SubmodularMechanism {
    fn name(&self) -> String {
        self.label()
    }

    fn run(&self, inst: &SubmodularInstance) -> Result<MechanismOutcome> {
        let sel = self.select(inst)?;
        let n = inst.n();
        let mut allocations = vec![0.0; n];
        let mut payments = vec![0.0; n];
        let mut rates = vec![0.0; n];
        for (k, &i) in sel.sequence.order[..sel.winners].iter().enumerate() {
            allocations[i] = 1.0;
            payments[i] = self.payment_for(inst, &sel, i)?;
            rates[i] = payments[i] / sel.sequence.marginals[k];
        }
        let value = inst.value(sel.winner_mask());
        Ok(MechanismOutcome::with_value(self.label(), allocations, payments, value, OutcomeRates::PerSeller(rates)))
    }

    fn seller_result(&self, inst: &SubmodularInstance, i: usize) -> Result<SellerResult> {
        let sel = self.select(inst)?;
        if sel.position(i).is_none() {
            return Ok(SellerResult { allocation: 0.0, payment: 0.0 });
        }
        Ok(SellerResult { allocation: 1.0, payment: self.payment_for(inst, &sel, i)? })
    }
}

/// Runs `mechanism` with budget B(1 - epsilon) and checks that it pays at most B.
pub fn strict_budget_wrapper(
    mechanism: &SubmodularMechanism,
    inst: &SubmodularInstance,
    epsilon: f64,
) -> Result<MechanismOutcome> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(invalid("epsilon", format!("must lie in [0, 1), got {epsilon}")));
    }
    let reduced = inst.with_budget(inst.budget * (1.0 - epsilon))?;
    let mut out = mechanism.run(&reduced)?;
    out.mechanism = format!("{}+strict({epsilon})", out.mechanism);
    if out.total_payment > inst.budget {
        return Err(Error::BudgetExceeded { paid: out.total_payment, budget: inst.budget });
    }
    Ok(out)
}

/// Which built-in family a random instance uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FamilyKind {
    Additive,
    Coverage { universe: usize, set_size: usize },
    ConcaveOverAdditive { transform: ConcaveTransform },
}

/// Random submodular instance: costs uniform on (0, 1], utilities uniform on
/// [0.5, 1.5], budget equal to `budget_fraction` of the total cost.
pub fn random_instance(kind: FamilyKind, n: usize, budget_fraction: f64, seed: u64) -> Result<SubmodularInstance> {
    if n == 0 {
        return Err(Error::EmptyMarket);
    }
    if budget_fraction.is_nan() || budget_fraction <= 0.0 {
        return Err(invalid("budget_fraction", format!("must be positive, got {budget_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let costs: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
    let family = match kind {
        FamilyKind::Additive => {
            SubmodularFamily::Additive { utilities: (0..n).map(|_| 0.5 + rng.random::<f64>()).collect() }
        }
        FamilyKind::ConcaveOverAdditive { transform } => SubmodularFamily::ConcaveOverAdditive {
            utilities: (0..n).map(|_| 0.5 + rng.random::<f64>()).collect(),
            transform,
        },
        FamilyKind::Coverage { universe, set_size } => {
            if universe == 0 || set_size == 0 {
                return Err(invalid("coverage", "universe and set size must be positive"));
            }
            let sets = (0..n)
                .map(|_| {
                    let mut s: Vec<usize> = (0..set_size).map(|_| rng.random_range(0..universe)).collect();
                    s.sort_unstable();
                    s.dedup();
                    s
                })
                .collect();
            SubmodularFamily::Coverage { sets, weights: Some(vec![1.0; universe]) }
        }
    };
    let budget = budget_fraction * costs.iter().sum::<f64>();
    SubmodularInstance::from_family(costs, budget, family)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> SubmodularInstance {
        SubmodularInstance::from_family(
            vec![0.1, 0.2, 0.7],
            1.0,
            SubmodularFamily::Additive { utilities: vec![1.0, 1.0, 1.0] },
        )
        .unwrap()
    }

    #[test]
    fn greedy_by_rate_on_additive() {
        let seq = greedy_sequence(&three(), GreedyOrdering::ByRate);
        assert_eq!(seq.order, vec![0, 1, 2]);
        assert_eq!(seq.marginals, vec![1.0, 1.0, 1.0]);
        assert_eq!(seq.prefix_values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn greedy_by_marginal_descends() {
        let inst = SubmodularInstance::from_family(
            vec![1.0; 3],
            1.0,
            SubmodularFamily::Additive { utilities: vec![0.5, 2.0, 1.0] },
        )
        .unwrap();
        assert_eq!(greedy_sequence(&inst, GreedyOrdering::ByMarginal).order, vec![1, 2, 0]);
    }

    #[test]
    fn zero_gains_go_last() {
        let inst = SubmodularInstance::from_family(
            vec![0.1, 0.5, 0.2],
            1.0,
            SubmodularFamily::Additive { utilities: vec![0.0, 1.0, 0.0] },
        )
        .unwrap();
        let seq = greedy_sequence(&inst, GreedyOrdering::ByRate);
        assert_eq!(seq.order, vec![1, 0, 2]);
        assert_eq!(seq.positive_len(), 1);
    }

    #[test]
    fn exhaustive_cases() {
        assert_eq!(exhaustive_optimum(&three(), 1.0).unwrap(), (3.0, vec![0, 1, 2]));
        assert_eq!(exhaustive_optimum(&three(), 0.05).unwrap(), (0.0, vec![]));
        assert_eq!(exhaustive_optimum(&three(), 0.3).unwrap(), (2.0, vec![0, 1]));
    }

    #[test]
    fn oracle_mechanism_hand_trace() {
        let inst = three();
        let mech = SubmodularMechanism::oracle(OptimumOracle::Exhaustive);
        let sel = mech.select(&inst).unwrap();
        assert_eq!(sel.f_star, Some(3.0));
        assert_eq!(sel.winners, 1);
        let out = mech.run(&inst).unwrap();
        assert_eq!(out.allocations, vec![1.0, 0.0, 0.0]);
        assert!((out.payments[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stopping_rate_cases() {
        let inst = SubmodularInstance::from_family(
            vec![1.0, 1.0],
            10.0,
            SubmodularFamily::Additive { utilities: vec![1.0, 1.0] },
        )
        .unwrap();
        let s = stopping_rate(&inst, 10.0, GreedyOrdering::ByRate);
        assert_eq!(s.prefix_len, 2);
        assert_eq!(s.rate, 5.0);
        let single =
            SubmodularInstance::from_family(vec![5.0], 1.0, SubmodularFamily::Additive { utilities: vec![1.0] })
                .unwrap();
        let s = stopping_rate(&single, 1.0, GreedyOrdering::ByRate);
        assert_eq!(s.prefix_len, 0);
        assert!(s.rate.is_infinite());
    }

    #[test]
    fn coverage_counts_union() {
        let fam = SubmodularFamily::Coverage { sets: vec![vec![0, 1], vec![1, 2], vec![70]], weights: None };
        let inst = SubmodularInstance::from_family(vec![1.0; 3], 1.0, fam).unwrap();
        assert_eq!(inst.value(0b011), 3.0);
        assert_eq!(inst.value(0b111), 4.0);
        assert_eq!(inst.value(0), 0.0);
    }

    #[test]
    fn empty_value_is_normalized() {
        let oracle = Arc::new(FnOracle::new(2, |s: u64| 5.0 + s.count_ones() as f64));
        let inst = SubmodularInstance::new(vec![1.0, 1.0], 2.0, oracle).unwrap();
        assert_eq!(inst.value(0), 0.0);
        assert_eq!(inst.value(3), 2.0);
    }

    #[test]
    fn gamma_oracle_small_cases() {
        let inst = three();
        assert_eq!(gamma_oracle(&inst, 1.0, GammaMode::Greedy).0, 3.0);
        let single = SubmodularInstance::from_family(
            vec![0.5, 2.0],
            1.0,
            SubmodularFamily::Additive { utilities: vec![1.0, 5.0] },
        )
        .unwrap();
        assert_eq!(gamma_oracle(&single, 1.0, GammaMode::Greedy), (1.0, vec![0]));
    }

    #[test]
    fn strict_wrapper_stays_within_budget() {
        let inst = random_instance(FamilyKind::Additive, 12, 0.5, 4).unwrap();
        let out = strict_budget_wrapper(&SubmodularMechanism::oracle(OptimumOracle::Exhaustive), &inst, 0.1);
        assert!(out.is_ok() || matches!(out, Err(Error::BudgetExceeded { .. })));
    }
}
