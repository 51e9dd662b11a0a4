// SPDX-License-Identifier: Apache-2.0

//! Myerson-area payment rules: Q_r(x) = x f_r(x) + ∫_x^∞ f_r and
//! P_{i,r}(c) = u_i Q_r(c / u_i).

use std::f64::consts::E;

use crate::rules::{ScaledRule, StandardRule, E_MINUS_1};

const CLAMP: f64 = 1e-14;

/// Q_1(c) for the unscaled rule.
pub fn standard_unit_payment(rule: &StandardRule, c: f64) -> f64 {
    let c = c.max(0.0);
    let q = match rule {
        StandardRule::Uniform => {
            if c < E_MINUS_1 {
                E_MINUS_1
            } else {
                0.0
            }
        }
        StandardRule::Step { t } => {
            if c < *t {
                2.0 * t - t * t
            } else if c < 1.0 {
                *t
            } else {
                0.0
            }
        }
        StandardRule::LogOptimal => {
            if c < E_MINUS_1 {
                // e ln(e - c) + c - (e - 1), written around the zero point for accuracy
                let h = E_MINUS_1 - c;
                E * h.ln_1p() - h
            } else {
                0.0
            }
        }
        StandardRule::Linear => {
            if c < 1.0 {
                0.5 * (1.0 - c * c)
            } else {
                0.0
            }
        }
        StandardRule::Tabulated(t) => c * rule.eval(c) + t.tail_area(c),
    };
    if q < CLAMP {
        0.0
    } else {
        q
    }
}

/// Q_r(x) = r Q_1(x / r): payment per unit of utility at rate x.
pub fn unit_payment(rule: &ScaledRule<'_>, x: f64) -> f64 {
    let q = rule.r * standard_unit_payment(rule.base, x / rule.r);
    if q < CLAMP {
        0.0
    } else {
        q
    }
}

/// P_{i,r}(c) = u Q_r(c / u).
pub fn payment(rule: &ScaledRule<'_>, utility: f64, cost: f64) -> f64 {
    utility * unit_payment(rule, cost / utility)
}
