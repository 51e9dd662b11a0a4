// SPDX-License-Identifier: Apache-2.0

//! Budget-feasible procurement mechanisms.
//!
//! A buyer with budget `B` purchases items from sellers with private costs.
//! The crate provides allocation and payment rules, the budget-tight scaling
//! mechanism and its truthful counterpart, randomized rounding for
//! indivisible items, greedy mechanisms for submodular utilities, hardness
//! and worst-case probes, and audits that check the resulting outcomes.

pub mod adversarial;
pub mod audit;
pub mod divisible;
pub mod error;
pub mod knapsack;
pub mod market;
pub mod mechanism;
pub mod numeric;
pub mod payment;
pub mod rounding;
pub mod rules;
pub mod submodular;

pub use error::{Error, Result};
pub use market::{generate_market, MarketInstance, MechanismOutcome, OutcomeRates, Seller};
pub use mechanism::{Mechanism, Procurement, SellerResult};
pub use rules::{ScaledRule, StandardRule};
