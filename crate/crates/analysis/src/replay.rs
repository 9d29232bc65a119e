//! End-to-end replays with synthetic participants.
//!
//! Each participant follows the human tree at a fixed pace drawn from
//! `seconds_per_task`, so the population behaves like a capacity model with
//! heterogeneous capacities.

use rand_distr::{Distribution, Uniform};
use refereval_core::rng::{SeedTree, StreamKind};
use refereval_core::PerfModel;
use refereval_microworld::{build_calibration, build_experiment2, Experiment, Schedule, SessionLog, SyntheticParticipant};
use serde::{Deserialize, Serialize};

use crate::compare::{compare_policies, subject_costs, ComparisonReport};
use crate::error::{AnalysisError, Result};
use crate::perf::{estimate_perf, EstimateOptions, PerfEstimate};
use crate::ttest::Alternative;

/// Session start times are offsets from this instant (2024-01-01 UTC).
pub const EPOCH_MS: u64 = 1_704_067_200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub participants: usize,
    /// Range of the uniform pace, seconds per task.
    pub seconds_per_task: (f64, f64),
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig { participants: 14, seconds_per_task: (9.0, 15.0) }
    }
}

impl ReplayConfig {
    /// Participant `i` of a replay seeded with `seeds`.
    pub fn participant(&self, seeds: &SeedTree, i: usize) -> Result<SyntheticParticipant> {
        let (lo, hi) = self.seconds_per_task;
        let pace = Uniform::new_inclusive(lo, hi).map_err(|e| AnalysisError::NoData(format!("bad pace range: {e}")))?;
        let s = pace.sample(&mut seeds.stream(StreamKind::Participant, i as u64, 0));
        Ok(SyntheticParticipant::new(format!("p{i:02}"), s)?)
    }

    /// Every participant plays `schedule` once.
    pub fn play(&self, experiment: &Experiment, schedule: &Schedule, seeds: &SeedTree, tag: &str) -> Result<Vec<SessionLog>> {
        (0..self.participants)
            .map(|i| {
                let p = self.participant(seeds, i)?;
                let mut rng = seeds.stream(StreamKind::Participant, i as u64, 1);
                Ok(p.play_session(experiment, schedule, &format!("{tag}-{i:02}"), EPOCH_MS, &mut rng)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub calibration: Schedule,
    pub estimate: PerfEstimate,
    pub schedule: Schedule,
    pub logs: Vec<SessionLog>,
    pub report: ComparisonReport,
}

/// Calibration sessions, performance estimate, allocation schedule built
/// from the estimate, allocation sessions, and the paired comparison.
pub fn synthetic_replay(experiment: &Experiment, config: &ReplayConfig, seed: u64) -> Result<Replay> {
    let seeds = SeedTree::new(seed);
    let calibration = build_calibration(experiment, seeds.child(StreamKind::Schedule, 0, 0).master())?;
    let cal_logs = config.play(experiment, &calibration, &seeds.child(StreamKind::Participant, 0, 0), "cal")?;
    let estimate = estimate_perf(&cal_logs, &calibration, &EstimateOptions::default())?;
    let table = estimate.table()?;
    let (schedule, logs, report) = allocation_replay(experiment, &table, config, &seeds)?;
    Ok(Replay { calibration, estimate, schedule, logs, report })
}

/// The allocation half of a replay, given a human performance model.
pub fn allocation_replay<M: PerfModel + ?Sized>(experiment: &Experiment, perf: &M, config: &ReplayConfig, seeds: &SeedTree) -> Result<(Schedule, Vec<SessionLog>, ComparisonReport)> {
    let schedule = build_experiment2(experiment, perf, seeds.child(StreamKind::Schedule, 1, 0).master())?;
    // The same participants as in calibration.
    let logs = config.play(experiment, &schedule, &seeds.child(StreamKind::Participant, 0, 0), "alloc")?;
    let costs = subject_costs(&logs, &logs, &schedule)?;
    let report = compare_policies(&costs, Alternative::Greater)?;
    Ok((schedule, logs, report))
}
