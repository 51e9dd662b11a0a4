// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use budgetmech::rules::StandardRule;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Q_1(c) = c f(c) + ∫_c^∞ f by quadrature, split at the rule's breakpoints.
pub fn quadrature_unit_payment(rule: &StandardRule, c: f64) -> f64 {
    let x0 = rule.zero_point();
    if c >= x0 {
        return 0.0;
    }
    let mut cuts: Vec<f64> = rule.breakpoints().into_iter().filter(|&b| b > c && b < x0).collect();
    cuts.insert(0, c);
    cuts.push(x0);
    let mut area = 0.0;
    for w in cuts.windows(2) {
        // stay inside each smooth piece so jumps do not spoil the quadrature
        let (a, b) = (w[0], w[1]);
        let mid = |x: f64| rule.eval(x.clamp(a + 1e-15, b - 1e-15));
        area += simpson(mid, a, b, 2000);
    }
    c * rule.eval(c) + area
}

/// Plain bisection for an increasing function, returning the root.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn all_rules() -> Vec<StandardRule> {
    vec![
        StandardRule::Uniform,
        StandardRule::LogOptimal,
        StandardRule::Linear,
        StandardRule::Step { t: 0.55 },
        StandardRule::Step { t: 0.3 },
        StandardRule::Tabulated(
            budgetmech::rules::TabulatedRule::new(vec![(0.0, 1.0), (0.4, 0.8), (0.9, 0.5), (1.2, 0.5), (1.6, 0.0)])
                .unwrap(),
        ),
    ]
}

pub fn continuous_rules() -> Vec<StandardRule> {
    all_rules().into_iter().filter(|r| r.is_continuous()).collect()
}
