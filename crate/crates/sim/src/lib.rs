//! Monte Carlo comparison of referral policies.
//!
//! A study samples problem instances (priors, observation noise, costs),
//! draws batches of tasks for each, and runs optimal, blind and static
//! allocation on every batch with a Bayes-optimal synthetic human. Every
//! random draw comes from a named stream of one master seed, so results are
//! identical for any number of worker threads.
//!
//! ```
//! use refereval_sim::{run_study, summarize, ScenarioConfig};
//!
//! let mut cfg = ScenarioConfig::default();
//! cfg.study.n_instances = 2;
//! cfg.study.n_batches = 20;
//! cfg.study.sa_batches = 20;
//! let results = run_study(&cfg, Some(2)).unwrap();
//! assert_eq!(results.rows.len(), 2 * 20 * 3);
//! let summary = summarize(&results.rows);
//! assert_eq!(summary.len(), 2);
//! ```

pub mod config;
mod error;
pub mod export;
pub mod instance;
pub mod study;
pub mod summary;

pub use config::{Param, PolicyKind, ScenarioConfig};
pub use error::{Result, SimError};
pub use export::{export_results, export_with_meta, read_meta, read_rows, ResultsMeta};
pub use instance::{generate_batch, sa_workload, sample_problem_instance, InstanceRunner, Outcome, Policy, ProblemInstance};
pub use study::{run_study, InstanceRecord, StudyResults, StudyRow};
pub use summary::{compare, summarize, Comparison, InstanceSummary, PolicySummary};
