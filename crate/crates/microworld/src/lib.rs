//! The radar classification microworld: attribute laws, decision trees,
//! task generation, round schedules and session logs.
//!
//! [`ExperimentConfig`] is the single configuration document. Compiling it
//! yields an [`Experiment`] with the automation tree, exact leaf
//! likelihoods and leaf posteriors, from which the schedule builders draw
//! their tasks.

// `!(x > 0.0)` is the NaN-rejecting form used for parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod error;
pub mod log;
pub mod participant;
pub mod schedule;
pub mod schema;
pub mod task;
pub mod tree;

pub use config::{AutomationTreeSpec, Experiment, ExperimentConfig, Mode, REFERENCE_TOML};
pub use error::{MicroworldError, Result};
pub use log::{read_events, read_logs, resolve_unclassified, Decision, Event, EventWriter, SessionLog, Source};
pub use participant::SyntheticParticipant;
pub use schedule::{build_calibration, build_experiment2, build_schedule, Round, RoundPolicy, Schedule};
pub use schema::{Attribute, AttributeLaw, AttributeSchema, Attributes, Region, Value};
pub use task::{generate_task, MicroworldTask, ATTEMPT_BUDGET};
pub use tree::{Classification, DecisionTree, Leaf};
