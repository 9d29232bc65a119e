//! Decision referral for human-automation teams doing binary classification.
//!
//! An automation observes a batch of tasks, forms a posterior belief for
//! each, and may refer some of them to a human whose accuracy depends on how
//! many tasks they receive. This crate contains the expected-cost
//! mathematics ([`cost`]), the observation and human-performance models
//! ([`models`]), the allocation policies ([`policies`]) and the seeded stream
//! derivation used by every simulation in the workspace ([`rng`]).
//!
//! ```
//! use refereval_core::cost::{DecisionCosts, Posterior};
//! use refereval_core::models::{PerfTable, Rates};
//! use refereval_core::cost::referral_index;
//!
//! let costs = DecisionCosts::new(0.0, 8.0, 0.0, 12.0, 0.5).unwrap();
//! let human = PerfTable::constant(&[0, 1, 2], Rates::new(0.9, 0.05).unwrap());
//! let r = referral_index(Posterior::new(0.4).unwrap(), 2, &human, &costs).unwrap();
//! assert!((r - 3.58).abs() < 1e-9);
//! ```

// `!(x > 0.0)` is the NaN-rejecting form used for parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
mod error;
pub mod models;
pub mod normal;
pub mod policies;
pub mod rng;

pub use cost::{
    automation_cost, automation_decision, human_cost, optimal_automation_cost,
    posterior_from_likelihoods, referral_index, team_cost, Batch, DecisionCosts, Hypothesis,
    Posterior, Prior, ReferralPlan, Task, TaskId,
};
pub use error::{Error, Result};
pub use models::{HumanPerfModel, PerfModel, Rates};
pub use policies::{optimal_referral, top_w_referral, AllocationResult, LoadSet};
