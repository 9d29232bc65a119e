//! Per-instance aggregates and policy comparisons.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::PolicyKind;
use crate::study::StudyRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub batches: usize,
    pub mean_expected: f64,
    pub mean_realized: f64,
    /// Standard error of `mean_realized`.
    pub se_realized: f64,
    pub mean_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceSummary {
    pub instance_id: usize,
    pub policies: BTreeMap<PolicyKind, PolicySummary>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    expected: f64,
    realized: f64,
    realized2: f64,
    load: f64,
}

/// Aggregates rows per instance and policy. Sums run in row order, so the
/// result is reproducible bit for bit.
pub fn summarize(rows: &[StudyRow]) -> Vec<InstanceSummary> {
    let mut acc: BTreeMap<(usize, PolicyKind), Acc> = BTreeMap::new();
    for r in rows {
        let a = acc.entry((r.instance_id, r.policy)).or_default();
        a.n += 1;
        a.expected += r.expected_cost;
        a.realized += r.realized_cost;
        a.realized2 += r.realized_cost * r.realized_cost;
        a.load += r.load as f64;
    }
    let mut out: BTreeMap<usize, InstanceSummary> = BTreeMap::new();
    for ((id, policy), a) in acc {
        let n = a.n as f64;
        let mean = a.realized / n;
        let var = if a.n > 1 { ((a.realized2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        out.entry(id).or_insert_with(|| InstanceSummary { instance_id: id, policies: BTreeMap::new() }).policies.insert(
            policy,
            PolicySummary { policy, batches: a.n, mean_expected: a.expected / n, mean_realized: mean, se_realized: (var / n).sqrt(), mean_load: a.load / n },
        );
    }
    out.into_values().collect()
}

/// Counts over instances of the headline comparisons, on mean expected cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Comparison {
    pub instances: usize,
    /// OA no costlier than BA.
    pub oa_not_above_ba: usize,
    /// OA at least 15% below BA, relative to BA.
    pub oa_15pct_below_ba: usize,
    /// SA within 5% of OA, relative to OA.
    pub sa_within_5pct_of_oa: usize,
}

pub fn relative_saving(oa: f64, ba: f64) -> f64 {
    (ba - oa) / ba
}

pub fn relative_gap(oa: f64, sa: f64) -> f64 {
    (sa - oa).abs() / oa
}

/// Comparison counts; instances missing OA, BA or SA are left out of the
/// counts that need them.
pub fn compare(summaries: &[InstanceSummary]) -> Comparison {
    let mut c = Comparison { instances: summaries.len(), oa_not_above_ba: 0, oa_15pct_below_ba: 0, sa_within_5pct_of_oa: 0 };
    for s in summaries {
        let get = |k| s.policies.get(&k).map(|p: &PolicySummary| p.mean_expected);
        if let (Some(oa), Some(ba)) = (get(PolicyKind::Oa), get(PolicyKind::Ba)) {
            c.oa_not_above_ba += usize::from(oa <= ba);
            c.oa_15pct_below_ba += usize::from(relative_saving(oa, ba) >= 0.15);
        }
        if let (Some(oa), Some(sa)) = (get(PolicyKind::Oa), get(PolicyKind::Sa)) {
            c.sa_within_5pct_of_oa += usize::from(relative_gap(oa, sa) <= 0.05);
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(instance_id: usize, policy: PolicyKind, e: f64, r: f64) -> StudyRow {
        StudyRow { instance_id, policy, batch_id: 0, realized_cost: r, expected_cost: e, load: 2 }
    }

    #[test]
    fn aggregates_and_counts() {
        let rows = vec![
            row(0, PolicyKind::Oa, 8.0, 7.0),
            row(0, PolicyKind::Oa, 8.0, 9.0),
            row(0, PolicyKind::Ba, 10.0, 10.0),
            row(0, PolicyKind::Sa, 8.3, 8.0),
            row(1, PolicyKind::Oa, 9.0, 9.0),
            row(1, PolicyKind::Ba, 10.0, 10.0),
            row(1, PolicyKind::Sa, 10.0, 10.0),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        let oa = s[0].policies[&PolicyKind::Oa];
        assert_eq!((oa.batches, oa.mean_realized, oa.mean_expected), (2, 8.0, 8.0));
        // Sample sd of {7, 9} is sqrt(2); se = sqrt(2)/sqrt(2).
        assert!((oa.se_realized - 1.0).abs() < 1e-12);
        let c = compare(&s);
        assert_eq!(c, Comparison { instances: 2, oa_not_above_ba: 2, oa_15pct_below_ba: 1, sa_within_5pct_of_oa: 1 });
    }
}
