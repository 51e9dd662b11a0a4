// SPDX-License-Identifier: Apache-2.0

//! Randomized rounding of a fractional outcome over the single-constraint
//! budget polytope P = {y in [0,1]^n : Σ y_i w_i <= B}. The point is written
//! as a lottery over semi-integral points of P, one atom is drawn, and its
//! remaining fractional coordinate is settled by a coin flip.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::divisible::{run_truthful, TruthfulResult};
use crate::error::{invalid, Error, Result};
use crate::market::MarketInstance;
use crate::rules::StandardRule;

const SNAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetPolytopeSpec {
    /// Payment per unit of allocation; 0 for coordinates frozen at 0.
    pub weights: Vec<f64>,
    pub cap: f64,
}

impl BudgetPolytopeSpec {
    pub fn new(weights: Vec<f64>, cap: f64) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights", "must be finite and nonnegative"));
        }
        if !(cap.is_finite() && cap >= 0.0) {
            return Err(invalid("cap", format!("must be finite and nonnegative, got {cap}")));
        }
        Ok(BudgetPolytopeSpec { weights, cap })
    }

    /// Weights p_i / x_i from a fractional outcome.
    pub fn from_outcome(allocations: &[f64], payments: &[f64], cap: f64) -> Result<Self> {
        if allocations.len() != payments.len() {
            return Err(Error::LengthMismatch { expected: allocations.len(), actual: payments.len() });
        }
        let weights = allocations.iter().zip(payments).map(|(&x, &p)| if x > 0.0 { p / x } else { 0.0 }).collect();
        BudgetPolytopeSpec::new(weights, cap)
    }

    pub fn load(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    fn contains(&self, y: &[f64]) -> bool {
        self.load(y) <= self.cap * (1.0 + 1e-9) + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub probability: f64,
    pub point: Vec<f64>,
}

impl Atom {
    /// Index of the non-integral coordinate, if any.
    pub fn fractional_index(&self) -> Option<usize> {
        self.point.iter().position(|&v| v > 0.0 && v < 1.0)
    }

    pub fn is_semi_integral(&self) -> bool {
        self.point.iter().filter(|&&v| v > 0.0 && v < 1.0).count() <= 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lottery {
    pub atoms: Vec<Atom>,
}

impl Lottery {
    pub fn marginals(&self) -> Vec<f64> {
        let n = self.atoms.first().map_or(0, |a| a.point.len());
        let mut m = vec![0.0; n];
        for a in &self.atoms {
            for (mi, v) in m.iter_mut().zip(&a.point) {
                *mi += a.probability * v;
            }
        }
        m
    }
}

fn is_free(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

fn snap(v: f64) -> f64 {
    if v < SNAP {
        0.0
    } else if v > 1.0 - SNAP {
        1.0
    } else {
        v
    }
}

/// Writes `x` as a convex combination of semi-integral points of P.
///
/// Each step picks a vertex v of P that agrees with the current point on its
/// integral coordinates, then moves the current point y away from v along
/// y - v until a coordinate (or the budget) becomes tight; y is then the
/// stated mix of v and the new point. This needs at most n + 2 steps.
pub fn decompose(x: &[f64], spec: &BudgetPolytopeSpec) -> Result<Lottery> {
    let n = x.len();
    if spec.weights.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: spec.weights.len() });
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("x", "entries must lie in [0, 1]"));
    }
    if !spec.contains(x) {
        return Err(Error::OutsidePolytope { load: spec.load(x), cap: spec.cap });
    }
    let w = &spec.weights;
    let mut y: Vec<f64> = x.iter().map(|&v| snap(v)).collect();
    let mut atoms = Vec::new();
    let mut mass = 1.0;
    for _ in 0..(n + 4) {
        let free: Vec<usize> = (0..n).filter(|&i| is_free(y[i])).collect();
        if free.len() <= 1 {
            atoms.push(Atom { probability: mass, point: y });
            return Ok(Lottery { atoms });
        }
        let fixed_load: f64 = (0..n).filter(|&i| y[i] == 1.0).map(|i| w[i]).sum();
        let room = spec.cap - fixed_load;
        let load: f64 = free.iter().map(|&i| w[i] * y[i]).sum();
        let tight = load >= room - 1e-12 * spec.cap.max(1.0);

        let mut v = y.clone();
        let mut mu = f64::INFINITY;
        if tight {
            fill_vertex(&mut v, &free, w, load);
        } else {
            for &i in &free {
                v[i] = 0.0;
            }
            if load > 0.0 {
                mu = room / load - 1.0;
            }
        }
        let mut hit = None;
        for &i in &free {
            let d = y[i] - v[i];
            let limit = if d > 0.0 {
                (1.0 - y[i]) / d
            } else if d < 0.0 {
                y[i] / -d
            } else {
                continue;
            };
            if limit < mu {
                mu = limit;
                hit = Some((i, if d > 0.0 { 1.0 } else { 0.0 }));
            }
        }
        if !mu.is_finite() {
            atoms.push(Atom { probability: mass, point: y });
            return Ok(Lottery { atoms });
        }
        let mut next = y.clone();
        for &i in &free {
            next[i] = snap(y[i] + mu * (y[i] - v[i]));
        }
        if let Some((i, bound)) = hit {
            next[i] = bound;
        }
        let weight_v = mu / (1.0 + mu);
        if weight_v > 0.0 {
            atoms.push(Atom { probability: mass * weight_v, point: v });
        }
        mass /= 1.0 + mu;
        y = next;
    }
    Err(Error::Solver("rounding decomposition did not terminate".into()))
}

/// First-fit-decreasing vertex over the free coordinates with the same
/// weighted load; the leftover goes to the skipped item that overshoots least.
fn fill_vertex(v: &mut [f64], free: &[usize], w: &[f64], load: f64) {
    let mut order = free.to_vec();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut gap = load;
    let mut skipped = Vec::new();
    for &i in &order {
        if w[i] <= gap {
            v[i] = 1.0;
            gap -= w[i];
        } else {
            v[i] = 0.0;
            skipped.push(i);
        }
    }
    if gap > 1e-15 * load.max(1.0) {
        if let Some(&j) = skipped.iter().min_by(|&&a, &&b| w[a].total_cmp(&w[b]).then(a.cmp(&b))) {
            v[j] = gap / w[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundedOutcome {
    pub allocation: Vec<bool>,
    pub payments: Vec<f64>,
}

impl RoundedOutcome {
    pub fn total_payment(&self) -> f64 {
        self.payments.iter().sum()
    }
}

/// A decomposed fractional outcome ready for repeated sampling.
#[derive(Debug, Clone)]
pub struct Rounder {
    lottery: Lottery,
    cumulative: Vec<f64>,
    unit_payments: Vec<f64>,
}

impl Rounder {
    pub fn new(allocations: &[f64], payments: &[f64], cap: f64) -> Result<Self> {
        if allocations.iter().zip(payments).any(|(&x, &p)| x == 0.0 && p != 0.0) {
            return Err(invalid("payments", "a seller with zero allocation must be paid 0"));
        }
        let spec = BudgetPolytopeSpec::from_outcome(allocations, payments, cap)?;
        let lottery = decompose(allocations, &spec)?;
        let mut acc = 0.0;
        let cumulative = lottery
            .atoms
            .iter()
            .map(|a| {
                acc += a.probability;
                acc
            })
            .collect();
        Ok(Rounder { lottery, cumulative, unit_payments: spec.weights })
    }

    pub fn lottery(&self) -> &Lottery {
        &self.lottery
    }

    /// Winner i is paid p_i / x_i, everyone else 0.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RoundedOutcome {
        let total = *self.cumulative.last().expect("lottery has atoms");
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        let atom = &self.lottery.atoms[k];
        let mut allocation: Vec<bool> = atom.point.iter().map(|&v| v == 1.0).collect();
        if let Some(j) = atom.fractional_index() {
            allocation[j] = rng.random::<f64>() < atom.point[j];
        }
        let payments = allocation.iter().zip(&self.unit_payments).map(|(&won, &w)| if won { w } else { 0.0 }).collect();
        RoundedOutcome { allocation, payments }
    }
}

/// One rounding of (x, p) drawn from a generator seeded with `seed`.
pub fn round(allocations: &[f64], payments: &[f64], cap: f64, seed: u64) -> Result<RoundedOutcome> {
    let rounder = Rounder::new(allocations, payments, cap)?;
    Ok(rounder.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// The truthful divisible mechanism followed by rounding. With `epsilon > 0`
/// the divisible mechanism runs on budget B(1 - epsilon).
pub fn truthful_rounder(
    market: &MarketInstance,
    rule: &StandardRule,
    epsilon: f64,
) -> Result<(TruthfulResult, Rounder)> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(invalid("epsilon", format!("must lie in [0, 1), got {epsilon}")));
    }
    let reduced = market.with_budget(market.budget * (1.0 - epsilon))?;
    let res = run_truthful(&reduced, rule)?;
    let rounder = Rounder::new(&res.outcome.allocations, &res.outcome.payments, reduced.budget)?;
    Ok((res, rounder))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_point_is_single_atom() {
        let spec = BudgetPolytopeSpec::new(vec![1.0, 2.0], 5.0).unwrap();
        let l = decompose(&[1.0, 0.0], &spec).unwrap();
        assert_eq!(l.atoms.len(), 1);
        assert_eq!(l.atoms[0].probability, 1.0);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let spec = BudgetPolytopeSpec::new(vec![1.0, 1.0], 1.0).unwrap();
        let l = decompose(&[0.5, 0.5], &spec).unwrap();
        let mut atoms: Vec<(Vec<f64>, f64)> = l.atoms.iter().map(|a| (a.point.clone(), a.probability)).collect();
        atoms.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].0, vec![0.0, 1.0]);
        assert_eq!(atoms[1].0, vec![1.0, 0.0]);
        assert!((atoms[0].1 - 0.5).abs() < 1e-15 && (atoms[1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uneven_pair_recombines() {
        let spec = BudgetPolytopeSpec::new(vec![1.0, 1.0], 2.0).unwrap();
        let x = [0.75, 0.5];
        let l = decompose(&x, &spec).unwrap();
        let m = l.marginals();
        assert!((m[0] - 0.75).abs() < 1e-12 && (m[1] - 0.5).abs() < 1e-12);
        assert!(l.atoms.iter().all(|a| a.is_semi_integral()));
    }

    #[test]
    fn rejects_points_outside() {
        let spec = BudgetPolytopeSpec::new(vec![1.0, 1.0], 0.5).unwrap();
        assert!(matches!(decompose(&[0.5, 0.5], &spec), Err(Error::OutsidePolytope { .. })));
    }

    #[test]
    fn zero_allocation_must_be_unpaid() {
        assert!(Rounder::new(&[0.0, 0.5], &[0.1, 0.5], 1.0).is_err());
    }

    #[test]
    fn integral_input_rounds_to_itself() {
        let out = round(&[1.0, 0.0], &[0.7, 0.0], 1.0, 3).unwrap();
        assert_eq!(out.allocation, vec![true, false]);
        assert_eq!(out.payments, vec![0.7, 0.0]);
    }
}
