//! Statistics over session logs: human operating points per load, paired
//! comparisons of allocation policies, and box-plot summaries.

pub mod compare;
mod error;
pub mod perf;
pub mod replay;
pub mod stats;
pub mod ttest;

pub use compare::{compare_policies, round_costs, subject_costs, ComparisonReport, SubjectCosts, SubjectSummary};
pub use error::{AnalysisError, Result};
pub use perf::{completion, estimate_perf, EstimateOptions, LoadCounts, PerfEstimate};
pub use replay::{allocation_replay, synthetic_replay, Replay, ReplayConfig};
pub use stats::{summary_stats, Summary};
pub use ttest::{paired_t_test, student_t_cdf, student_t_sf, Alternative, PairedTestResult};
