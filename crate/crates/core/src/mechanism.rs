// SPDX-License-Identifier: Apache-2.0

//! Common interface shared by every mechanism so audits can treat them alike.

use crate::error::Result;
use crate::market::{MarketInstance, MechanismOutcome};

/// An instance whose sellers report costs.
pub trait Procurement: Clone {
    fn seller_count(&self) -> usize;
    fn cost(&self, i: usize) -> f64;
    fn budget(&self) -> f64;
    /// The same instance with seller `i` reporting `cost`.
    fn with_report(&self, i: usize, cost: f64) -> Result<Self>;
    /// A serializable copy, used as an audit witness.
    fn snapshot(&self) -> serde_json::Value;
}

impl Procurement for MarketInstance {
    fn seller_count(&self) -> usize {
        self.len()
    }

    fn cost(&self, i: usize) -> f64 {
        self.sellers[i].cost
    }

    fn budget(&self) -> f64 {
        self.budget
    }

    fn with_report(&self, i: usize, cost: f64) -> Result<Self> {
        self.with_cost(i, cost)
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("market serializes")
    }
}

/// What one seller gets: allocated fraction and payment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SellerResult {
    pub allocation: f64,
    pub payment: f64,
}

impl SellerResult {
    /// Quasi-linear utility at the given true cost.
    pub fn utility(&self, true_cost: f64) -> f64 {
        self.payment - true_cost * self.allocation
    }
}

pub trait Mechanism<I: Procurement> {
    fn name(&self) -> String;

    fn run(&self, inst: &I) -> Result<MechanismOutcome>;

    /// Outcome for a single seller. Implementations may skip work for the others.
    fn seller_result(&self, inst: &I, i: usize) -> Result<SellerResult> {
        let o = self.run(inst)?;
        Ok(SellerResult { allocation: o.allocations[i], payment: o.payments[i] })
    }
}
