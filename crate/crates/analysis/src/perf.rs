//! Human operating points per load, pooled over calibration sessions.

use std::collections::BTreeMap;

use refereval_core::models::PerfTable;
use refereval_core::Hypothesis;
use refereval_microworld::{SessionLog, Schedule, Source};
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Count auto-resolved labels as the participant's decisions.
    pub include_auto_resolve: bool,
    pub include_practice: bool,
    /// Sessions whose share of human-labelled scored tasks is below this
    /// are discarded.
    pub min_completion: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { include_auto_resolve: true, include_practice: false, min_completion: 0.55 }
    }
}

/// Pooled counts at one load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCounts {
    pub w: usize,
    pub n_h1: u64,
    pub n_h1_hit: u64,
    pub n_h0: u64,
    pub n_h0_fa: u64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    /// A zero denominator; the load is not a knot of the table.
    pub flagged: bool,
}

/// Knots `(loads, tpr, fpr)` plus the counts behind them. Only the knot
/// fields are needed to read an estimate back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfEstimate {
    pub loads: Vec<usize>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    #[serde(default)]
    pub counts: Vec<LoadCounts>,
    #[serde(default)]
    pub sessions_used: Vec<String>,
    #[serde(default)]
    pub sessions_excluded: Vec<String>,
}

impl PerfEstimate {
    /// Linear interpolation between the knots, clamped outside them.
    pub fn table(&self) -> Result<PerfTable> {
        Ok(PerfTable::new(self.loads.clone(), self.tpr.clone(), self.fpr.clone())?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("estimate serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let e: PerfEstimate = serde_json::from_str(s)?;
        e.table()?;
        Ok(e)
    }
}

/// Share of the session's scored assigned tasks labelled by the participant.
pub fn completion(log: &SessionLog, schedule: &Schedule) -> f64 {
    let mut assigned = 0usize;
    let mut human = 0usize;
    for round in schedule.scored_rounds() {
        let terminal = log.terminal_events(round.round_id);
        if terminal.is_empty() {
            continue;
        }
        assigned += round.load();
        human += terminal.values().filter(|e| e.source == Source::Human).count();
    }
    if assigned == 0 {
        0.0
    } else {
        human as f64 / assigned as f64
    }
}

/// Pools terminal labels by round load across sessions.
pub fn estimate_perf(logs: &[SessionLog], schedule: &Schedule, options: &EstimateOptions) -> Result<PerfEstimate> {
    let mut counts: BTreeMap<usize, [u64; 4]> = BTreeMap::new();
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for log in logs {
        log.check(schedule)?;
        if completion(log, schedule) < options.min_completion {
            excluded.push(log.session_id.clone());
            continue;
        }
        used.push(log.session_id.clone());
        for round in schedule.rounds.iter().filter(|r| options.include_practice || !r.practice) {
            let terminal = log.terminal_events(round.round_id);
            if terminal.is_empty() {
                continue;
            }
            let c = counts.entry(round.load()).or_default();
            for (id, e) in terminal {
                if e.source == Source::AutoResolve && !options.include_auto_resolve {
                    continue;
                }
                let truth = schedule.task(id).expect("checked against schedule").true_state;
                let positive = e.decision.label() == Some(Hypothesis::H1);
                match truth {
                    Hypothesis::H1 => {
                        c[0] += 1;
                        c[1] += u64::from(positive);
                    }
                    Hypothesis::H0 => {
                        c[2] += 1;
                        c[3] += u64::from(positive);
                    }
                }
            }
        }
    }
    let counts: Vec<LoadCounts> = counts
        .into_iter()
        .map(|(w, [n_h1, n_h1_hit, n_h0, n_h0_fa])| {
            let tpr = (n_h1 > 0).then(|| n_h1_hit as f64 / n_h1 as f64);
            let fpr = (n_h0 > 0).then(|| n_h0_fa as f64 / n_h0 as f64);
            LoadCounts { w, n_h1, n_h1_hit, n_h0, n_h0_fa, tpr, fpr, flagged: tpr.is_none() || fpr.is_none() }
        })
        .collect();
    let knots: Vec<&LoadCounts> = counts.iter().filter(|c| !c.flagged).collect();
    if knots.is_empty() {
        return Err(AnalysisError::NoData("no load has labels under both states".into()));
    }
    let estimate = PerfEstimate {
        loads: knots.iter().map(|c| c.w).collect(),
        tpr: knots.iter().map(|c| c.tpr.unwrap()).collect(),
        fpr: knots.iter().map(|c| c.fpr.unwrap()).collect(),
        counts: counts.clone(),
        sessions_used: used,
        sessions_excluded: excluded,
    };
    estimate.table()?;
    Ok(estimate)
}
