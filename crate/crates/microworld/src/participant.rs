//! Synthetic participants for closed-loop checks.
//!
//! A synthetic participant follows the human tree exactly, one task every
//! `seconds_per_task`, in a random order. Tasks it cannot reach before the
//! deadline are auto-resolved, so its rates follow the capacity model with
//! capacity `floor(duration / seconds_per_task)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::error::{MicroworldError, Result};
use crate::log::{resolve_unclassified, Decision, SessionLog, Source};
use crate::schedule::{Round, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParticipant {
    pub id: String,
    pub seconds_per_task: f64,
}

impl SyntheticParticipant {
    pub fn new(id: impl Into<String>, seconds_per_task: f64) -> Result<Self> {
        if !(seconds_per_task > 0.0 && seconds_per_task.is_finite()) {
            return Err(MicroworldError::Config("seconds_per_task must be positive".into()));
        }
        Ok(SyntheticParticipant { id: id.into(), seconds_per_task })
    }

    /// Tasks completed in a round of `duration_s` seconds.
    pub fn capacity(&self, duration_s: u32) -> usize {
        (f64::from(duration_s) / self.seconds_per_task).floor() as usize
    }

    /// Plays one round starting at `start_ms`, appending to `log`. Returns
    /// the close time: the last decision if every task was classified,
    /// otherwise the deadline.
    pub fn play_round<R: Rng + ?Sized>(&self, experiment: &Experiment, schedule: &Schedule, round: &Round, log: &mut SessionLog, start_ms: u64, rng: &mut R) -> Result<u64> {
        let mut order = round.task_ids.clone();
        order.shuffle(rng);
        let deadline = start_ms + u64::from(round.duration_s) * 1000;
        let done = self.capacity(round.duration_s).min(order.len());
        let mut close = start_ms;
        for (i, &id) in order[..done].iter().enumerate() {
            let task = schedule.task(id).ok_or_else(|| MicroworldError::Config(format!("unknown task {id}")))?;
            let label = experiment.human_tree().classify(&task.attributes)?.label;
            close = start_ms + ((i + 1) as f64 * self.seconds_per_task * 1000.0).round() as u64;
            log.events.push(log.event(close, round, id, Decision::from(label), Source::Human));
        }
        if done < order.len() {
            close = deadline;
        }
        let resolved = resolve_unclassified(round, log, close, rng);
        log.events.extend(resolved);
        Ok(close)
    }

    /// Plays every round of `schedule` back to back.
    pub fn play_session<R: Rng + ?Sized>(&self, experiment: &Experiment, schedule: &Schedule, session_id: &str, start_ms: u64, rng: &mut R) -> Result<SessionLog> {
        let mut log = SessionLog::new(session_id, self.id.clone());
        let mut t = start_ms;
        for round in &schedule.rounds {
            t = self.play_round(experiment, schedule, round, &mut log, t, rng)?;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::schedule::build_calibration;
    use refereval_core::rng::{SeedTree, StreamKind};

    #[test]
    fn capacity_and_timing() {
        let e = ExperimentConfig::reference().compile().unwrap();
        let s = build_calibration(&e, 1).unwrap();
        let p = SyntheticParticipant::new("p", 12.0).unwrap();
        assert_eq!(p.capacity(120), 10);
        let log = p.play_session(&e, &s, "s", 0, &mut SeedTree::new(1).stream(StreamKind::Participant, 0, 0)).unwrap();
        log.check(&s).unwrap();
        for r in &s.rounds {
            let terminal = log.terminal_events(r.round_id);
            let human = terminal.values().filter(|e| e.source == Source::Human).count();
            assert_eq!(human, r.load().min(10));
            assert_eq!(terminal.len(), r.load());
            // Human decisions follow the tree.
            for ev in terminal.values().filter(|ev| ev.source == Source::Human) {
                let task = s.task(ev.task_id).unwrap();
                assert_eq!(ev.decision.label(), Some(e.human_tree().classify(&task.attributes).unwrap().label));
            }
        }
        assert!(SyntheticParticipant::new("p", 0.0).is_err());
    }

    #[test]
    fn auto_resolve_at_deadline() {
        let e = ExperimentConfig::reference().compile().unwrap();
        let s = build_calibration(&e, 2).unwrap();
        let p = SyntheticParticipant::new("slow", 30.0).unwrap();
        let round = s.scored_rounds().find(|r| r.load() > 4).unwrap();
        let mut log = SessionLog::new("s", "slow");
        let close = p.play_round(&e, &s, round, &mut log, 1_000, &mut SeedTree::new(3).stream(StreamKind::Participant, 0, 0)).unwrap();
        assert_eq!(close, 121_000);
        let auto: Vec<_> = log.events.iter().filter(|e| e.source == Source::AutoResolve).collect();
        assert_eq!(auto.len(), round.load() - 4);
        assert!(auto.iter().all(|e| e.timestamp_ms >= 121_000));
    }
}
