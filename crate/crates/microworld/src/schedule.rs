//! Round schedules.
//!
//! A schedule lists every round of a session in presentation order, the
//! practice rounds first, and carries the hidden ground truth: true states,
//! automation leaves and posteriors, round policies, and the automation's
//! decisions on tasks not shown to the participant. It is the truth sidecar
//! that analysis reads next to the session logs; the server never sends its
//! hidden fields to a client.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use refereval_core::policies::{ba_select, ba_workload, optimal_referral};
use refereval_core::rng::{SeedTree, StreamKind};
use refereval_core::{Batch, DecisionCosts, Hypothesis, PerfModel, Posterior, Prior, Task, TaskId};
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Mode};
use crate::error::{MicroworldError, Result};
use crate::task::{generate_task, MicroworldTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundPolicy {
    Oa,
    Ba,
    Calibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    /// Position in the session, starting at 1.
    pub round_id: u32,
    pub policy: RoundPolicy,
    pub practice: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_id: Option<u32>,
    /// Tasks shown to the participant, in presentation order.
    pub task_ids: Vec<TaskId>,
    /// Automation decisions on the batch's remaining tasks.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub auto_decisions: BTreeMap<TaskId, Hypothesis>,
    pub duration_s: u32,
}

impl Round {
    pub fn load(&self) -> usize {
        self.task_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub mode: Mode,
    pub seed: u64,
    pub prior: Prior,
    pub costs: DecisionCosts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ba_load: Option<usize>,
    pub leaf_posteriors: BTreeMap<String, Posterior>,
    pub rounds: Vec<Round>,
    /// Sorted by id.
    pub tasks: Vec<MicroworldTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl Schedule {
    pub fn task(&self, id: TaskId) -> Option<&MicroworldTask> {
        self.tasks.binary_search_by_key(&id, |t| t.task_id).ok().map(|i| &self.tasks[i])
    }

    pub fn round(&self, round_id: u32) -> Option<&Round> {
        self.rounds.iter().find(|r| r.round_id == round_id)
    }

    pub fn scored_rounds(&self) -> impl Iterator<Item = &Round> {
        self.rounds.iter().filter(|r| !r.practice)
    }

    /// Checks ids, references and ordering.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(MicroworldError::Config(m));
        if self.tasks.windows(2).any(|w| w[0].task_id >= w[1].task_id) {
            return bad("tasks must be sorted by unique id".into());
        }
        for (i, r) in self.rounds.iter().enumerate() {
            if r.round_id as usize != i + 1 {
                return bad(format!("round at position {} has id {}", i + 1, r.round_id));
            }
            for id in r.task_ids.iter().chain(r.auto_decisions.keys()) {
                if self.task(*id).is_none() {
                    return bad(format!("round {} references unknown task {id}", r.round_id));
                }
            }
            if r.auto_decisions.keys().any(|id| r.task_ids.contains(id)) {
                return bad(format!("round {} both shows and auto-decides a task", r.round_id));
            }
        }
        if let Some(i) = self.rounds.iter().position(|r| !r.practice) {
            if self.rounds[i..].iter().any(|r| r.practice) {
                return bad("practice rounds must come first".into());
            }
        }
        Ok(())
    }

    /// Cost of one round given the final label of every shown task:
    /// decision costs plus `c_r` per shown task, plus the automation's
    /// decision costs on the rest of the batch.
    pub fn round_cost(&self, round: &Round, labels: &BTreeMap<TaskId, Hypothesis>) -> Result<f64> {
        let truth = |id: TaskId| self.task(id).map(|t| t.true_state).ok_or_else(|| MicroworldError::Config(format!("unknown task {id}")));
        let mut total = 0.0;
        for &id in &round.task_ids {
            let label = labels.get(&id).ok_or_else(|| MicroworldError::Config(format!("task {id} of round {} has no final label", round.round_id)))?;
            total += self.costs.cost(*label, truth(id)?) + self.costs.c_r();
        }
        for (&id, &d) in &round.auto_decisions {
            total += self.costs.cost(d, truth(id)?);
        }
        Ok(total)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| MicroworldError::Io { path: path.to_owned(), source })?;
        let s: Schedule = serde_json::from_str(&text).map_err(|source| MicroworldError::Json { path: path.to_owned(), line: source.line(), source })?;
        s.check()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| MicroworldError::Io { path: path.to_owned(), source })
    }
}

struct Builder<'a> {
    experiment: &'a Experiment,
    seeds: SeedTree,
    tasks: Vec<MicroworldTask>,
    rounds: Vec<Round>,
}

impl<'a> Builder<'a> {
    fn new(experiment: &'a Experiment, seed: u64) -> Self {
        Builder { experiment, seeds: SeedTree::new(seed), tasks: Vec::new(), rounds: Vec::new() }
    }

    fn next_id(&self) -> TaskId {
        self.tasks.len() as TaskId
    }

    /// `n` unconditioned tasks drawn from streams `(Task, group, slot)`.
    fn natural_tasks(&mut self, group: u64, n: usize) -> Result<Vec<TaskId>> {
        (0..n)
            .map(|slot| {
                let t = generate_task(self.experiment, self.next_id(), None, None, &mut self.seeds.stream(StreamKind::Task, group, slot as u64))?;
                let id = t.task_id;
                self.tasks.push(t);
                Ok(id)
            })
            .collect()
    }

    fn practice(&mut self) -> Result<()> {
        for (p, &load) in self.experiment.config.practice_loads.clone().iter().enumerate() {
            let task_ids = self.natural_tasks(p as u64, load)?;
            self.push_round(RoundPolicy::Calibration, true, None, task_ids, BTreeMap::new());
        }
        Ok(())
    }

    fn push_round(&mut self, policy: RoundPolicy, practice: bool, batch_id: Option<u32>, task_ids: Vec<TaskId>, auto_decisions: BTreeMap<TaskId, Hypothesis>) {
        self.rounds.push(Round {
            round_id: self.rounds.len() as u32 + 1,
            policy,
            practice,
            batch_id,
            task_ids,
            auto_decisions,
            duration_s: self.experiment.config.round_seconds,
        });
    }

    fn finish(self, mode: Mode, seed: u64, ba_load: Option<usize>) -> Schedule {
        let c = &self.experiment.config;
        let s = Schedule {
            mode,
            seed,
            prior: c.prior,
            costs: c.costs,
            ba_load,
            leaf_posteriors: self.experiment.leaf_posteriors.clone(),
            rounds: self.rounds,
            tasks: self.tasks,
            config_digest: None,
        };
        debug_assert!(s.check().is_ok());
        s
    }
}

/// Group offset separating scored-round task streams from practice ones.
const SCORED: u64 = 1 << 20;

/// Calibration session: the practice rounds, then every estimation load
/// `calibration_repeats` times in a seeded random order, each round filled
/// with unconditioned tasks.
pub fn build_calibration(experiment: &Experiment, seed: u64) -> Result<Schedule> {
    let c = &experiment.config;
    let mut b = Builder::new(experiment, seed);
    b.practice()?;
    let mut loads: Vec<usize> = c.estimation_loads.iter().flat_map(|&w| std::iter::repeat_n(w, c.calibration_repeats)).collect();
    loads.shuffle(&mut b.seeds.stream(StreamKind::Schedule, 0, 0));
    for (r, w) in loads.into_iter().enumerate() {
        let task_ids = b.natural_tasks(SCORED + r as u64, w)?;
        b.push_round(RoundPolicy::Calibration, false, None, task_ids, BTreeMap::new());
    }
    Ok(b.finish(Mode::Calibration, seed, None))
}

/// Allocation session. Each batch has `tasks_per_leaf` tasks from every
/// automation leaf, in random order, and yields a blind-allocation round
/// (constant load from `human_perf`) and an optimal-allocation round over
/// the configured load set. The scored rounds are shown in a seeded random
/// order after the practice rounds.
pub fn build_experiment2<M: PerfModel + ?Sized>(experiment: &Experiment, human_perf: &M, seed: u64) -> Result<Schedule> {
    let c = &experiment.config;
    let k = c.batch_size();
    let ba_load = ba_workload(c.prior, experiment.automation_rates, human_perf, &c.costs, &experiment.load_set, k)?;
    let mut b = Builder::new(experiment, seed);
    b.practice()?;

    let leaves: Vec<String> = experiment.automation_tree.leaves().iter().map(|l| l.id.clone()).collect();
    let mut scored = Vec::with_capacity(2 * c.batches);
    for batch_id in 0..c.batches as u32 {
        let bb = batch_id as u64;
        let mut slots: Vec<&String> = leaves.iter().flat_map(|l| std::iter::repeat_n(l, c.tasks_per_leaf)).collect();
        slots.shuffle(&mut b.seeds.stream(StreamKind::Schedule, 1, bb));
        let mut batch_tasks = Vec::with_capacity(k);
        for (slot, leaf) in slots.into_iter().enumerate() {
            let t = generate_task(experiment, b.next_id(), Some(leaf), None, &mut b.seeds.stream(StreamKind::Task, SCORED + bb, slot as u64))?;
            batch_tasks.push(Task::new(t.task_id, t.auto_posterior));
            b.tasks.push(t);
        }
        let batch = Batch::new(batch_tasks)?;
        let oa = optimal_referral(&batch, &experiment.load_set, human_perf, &c.costs)?.plan;
        let ba = ba_select(&batch, ba_load, &c.costs, &mut b.seeds.stream(StreamKind::Selection, bb, 0))?;
        for (policy, plan) in [(RoundPolicy::Ba, ba), (RoundPolicy::Oa, oa)] {
            let mut shown: Vec<TaskId> = plan.referred.iter().copied().collect();
            shown.shuffle(&mut b.seeds.stream(StreamKind::Schedule, 2, bb * 2 + u64::from(policy == RoundPolicy::Oa)));
            scored.push((policy, batch_id, shown, plan.terminal));
        }
    }
    scored.shuffle(&mut b.seeds.stream(StreamKind::Schedule, 0, 0));
    for (policy, batch_id, shown, auto) in scored {
        b.push_round(policy, false, Some(batch_id), shown, auto);
    }
    Ok(b.finish(Mode::Experiment2, seed, Some(ba_load)))
}

/// Builds the schedule for the configured mode. Allocation sessions need a
/// human performance model.
pub fn build_schedule(experiment: &Experiment, human_perf: Option<&dyn PerfModel>, seed: u64) -> Result<Schedule> {
    match experiment.config.mode {
        Mode::Calibration => build_calibration(experiment, seed),
        Mode::Experiment2 => {
            let perf = human_perf.ok_or_else(|| MicroworldError::Config("allocation sessions need a human performance estimate".into()))?;
            build_experiment2(experiment, perf, seed)
        }
    }
}
