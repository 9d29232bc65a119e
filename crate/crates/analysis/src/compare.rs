//! Within-subject comparison of blind and optimal allocation.

use std::collections::BTreeMap;

use refereval_microworld::{RoundPolicy, Schedule, SessionLog};
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};
use crate::stats::{mean, sample_std};
use crate::ttest::{paired_t_test, Alternative, PairedTestResult};

/// Round costs of one subject under each policy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubjectCosts {
    pub ba: Vec<f64>,
    pub oa: Vec<f64>,
}

/// Costs of the scored allocation rounds of `log` whose policy is in
/// `policies`. Rounds absent from the log are skipped; a round present but
/// not fully labelled is an error.
pub fn round_costs(log: &SessionLog, schedule: &Schedule, policies: &[RoundPolicy]) -> Result<SubjectCosts> {
    log.check(schedule)?;
    let mut out = SubjectCosts::default();
    for round in schedule.scored_rounds().filter(|r| policies.contains(&r.policy)) {
        let labels = log.labels(round.round_id);
        if labels.is_empty() {
            continue;
        }
        let cost = schedule.round_cost(round, &labels)?;
        match round.policy {
            RoundPolicy::Ba => out.ba.push(cost),
            RoundPolicy::Oa => out.oa.push(cost),
            RoundPolicy::Calibration => {}
        }
    }
    Ok(out)
}

/// Blind-allocation costs from `logs_ba` and optimal-allocation costs from
/// `logs_oa`, merged per participant.
pub fn subject_costs(logs_ba: &[SessionLog], logs_oa: &[SessionLog], schedule: &Schedule) -> Result<BTreeMap<String, SubjectCosts>> {
    let mut out: BTreeMap<String, SubjectCosts> = BTreeMap::new();
    for (logs, policy) in [(logs_ba, RoundPolicy::Ba), (logs_oa, RoundPolicy::Oa)] {
        for log in logs {
            let c = round_costs(log, schedule, &[policy])?;
            let entry = out.entry(log.participant.clone()).or_default();
            entry.ba.extend(c.ba);
            entry.oa.extend(c.oa);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject: String,
    pub ba_mean: f64,
    pub ba_sd: f64,
    pub oa_mean: f64,
    pub oa_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub subjects: Vec<SubjectSummary>,
    /// Subjects without rounds under both policies.
    pub excluded: Vec<String>,
    /// Differences `mean_BA - mean_OA`.
    pub average_case: PairedTestResult,
    /// Differences `(mean_BA + sd_BA) - (mean_OA - sd_OA)`.
    pub worst_case: PairedTestResult,
}

pub fn compare_policies(subjects: &BTreeMap<String, SubjectCosts>, alternative: Alternative) -> Result<ComparisonReport> {
    let mut summaries = Vec::new();
    let mut excluded = Vec::new();
    for (id, c) in subjects {
        if c.ba.is_empty() || c.oa.is_empty() {
            excluded.push(id.clone());
            continue;
        }
        if c.ba.iter().chain(&c.oa).any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite);
        }
        summaries.push(SubjectSummary { subject: id.clone(), ba_mean: mean(&c.ba), ba_sd: sample_std(&c.ba), oa_mean: mean(&c.oa), oa_sd: sample_std(&c.oa) });
    }
    let average: Vec<f64> = summaries.iter().map(|s| s.ba_mean - s.oa_mean).collect();
    let worst: Vec<f64> = summaries.iter().map(|s| (s.ba_mean + s.ba_sd) - (s.oa_mean - s.oa_sd)).collect();
    Ok(ComparisonReport {
        average_case: paired_t_test(&average, alternative)?,
        worst_case: paired_t_test(&worst, alternative)?,
        subjects: summaries,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subjects(rows: &[(&str, &[f64], &[f64])]) -> BTreeMap<String, SubjectCosts> {
        rows.iter().map(|(id, ba, oa)| (id.to_string(), SubjectCosts { ba: ba.to_vec(), oa: oa.to_vec() })).collect()
    }

    #[test]
    fn average_and_worst_case() {
        let s = subjects(&[("a", &[10.0, 12.0], &[8.0, 8.0]), ("b", &[9.0, 9.0], &[8.0, 6.0]), ("c", &[11.0, 13.0], &[7.0, 9.0]), ("d", &[5.0], &[])]);
        let r = compare_policies(&s, Alternative::Greater).unwrap();
        assert_eq!(r.excluded, vec!["d".to_string()]);
        assert_eq!(r.average_case.df, 2);
        // Average differences 3, 2, 4.
        assert!((r.average_case.mean_diff - 3.0).abs() < 1e-12);
        // Worst-case differences add both standard deviations.
        let r2 = 2f64.sqrt();
        let want = ((3.0 + r2) + (2.0 + r2) + (4.0 + 2.0 * r2)) / 3.0;
        assert!((r.worst_case.mean_diff - want).abs() < 1e-12);
        assert!(r.average_case.t0 > 0.0);
    }

    #[test]
    fn identical_costs_are_degenerate() {
        let s = subjects(&[("a", &[3.0, 4.0], &[3.0, 4.0]), ("b", &[5.0, 1.0], &[5.0, 1.0])]);
        assert!(matches!(compare_policies(&s, Alternative::Greater), Err(AnalysisError::DegenerateVariance)));
        let s = subjects(&[("a", &[3.0], &[1.0])]);
        assert!(matches!(compare_policies(&s, Alternative::Greater), Err(AnalysisError::InsufficientData(1))));
    }
}
