// SPDX-License-Identifier: Apache-2.0

//! Small numeric helpers: monotone root bracketing and Chebyshev interpolation.

use crate::error::{Error, Result};

const MAX_DOUBLINGS: usize = 2100;

/// sup{r > 0 : total(r) <= budget} for a nondecreasing `total` with total(0+) = 0
/// and total(∞) = ∞. Brackets from r = 1 by doubling or halving, then bisects
/// until the bracket is within `rel_tol` relative. Returns the feasible end.
pub fn sup_feasible(total: impl Fn(f64) -> f64, budget: f64, rel_tol: f64) -> Result<f64> {
    let (mut lo, mut hi);
    if total(1.0) <= budget {
        lo = 1.0;
        hi = 2.0;
        let mut steps = 0;
        while total(hi) <= budget {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > MAX_DOUBLINGS || !hi.is_finite() {
                return Err(Error::Solver("budget equation never exceeds the budget".into()));
            }
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        let mut steps = 0;
        while total(lo) > budget {
            hi = lo;
            lo *= 0.5;
            steps += 1;
            if steps > MAX_DOUBLINGS || lo == 0.0 {
                return Err(Error::Solver("budget equation exceeds the budget at every rate".into()));
            }
        }
    }
    Ok(bisect_feasible(total, budget, lo, hi, rel_tol))
}

/// Bisection on a bracket with total(lo) <= budget < total(hi).
pub fn bisect_feasible(total: impl Fn(f64) -> f64, budget: f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Chebyshev interpolant of a function on [a, b].
#[derive(Debug, Clone)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    /// Interpolates at `n` Chebyshev nodes of the first kind.
    pub fn fit(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let pi = std::f64::consts::PI;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let values: Vec<f64> = (0..n)
            .map(|k| {
                let t = (pi * (k as f64 + 0.5) / n as f64).cos();
                f(mid + half * t)
            })
            .collect();
        let coeffs = (0..n)
            .map(|j| {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (pi * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                let c = 2.0 * s / n as f64;
                if j == 0 {
                    0.5 * c
                } else {
                    c
                }
            })
            .collect();
        Chebyshev { a, b, coeffs }
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }
}
