//! Problem instances, batch generation and single-batch policy runs.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use refereval_core::models::{AnalyticHuman, GaussianObsModel, HumanObsLaw, PerfTable, Rates};
use refereval_core::policies::{ba_select, ba_workload, fixed_load_costs, mean_fixed_load_costs, argmin_load, optimal_referral, plan_for_load};
use refereval_core::rng::{SeedTree, StreamKind};
use refereval_core::{Batch, DecisionCosts, Error, Hypothesis, LoadSet, Prior, ReferralPlan, Task, TaskId};
use serde::{Deserialize, Serialize};

use crate::config::{PolicyKind, ScenarioConfig};
use crate::error::Result;

/// One sampled simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: usize,
    pub prior: Prior,
    pub automation: GaussianObsModel,
    pub human_law: HumanObsLaw,
    pub costs: DecisionCosts,
    pub k: usize,
    pub load_set: LoadSet,
}

impl ProblemInstance {
    pub fn human(&self) -> AnalyticHuman {
        AnalyticHuman::new(self.human_law, self.costs, self.prior)
    }

    /// Human rates tabulated at every load `0..=k`; exact at each integer load.
    pub fn human_table(&self) -> Result<PerfTable> {
        Ok(PerfTable::tabulate(&self.human(), 0..=self.k)?)
    }

    /// Operating point of the automation's own Bayes test.
    pub fn automation_rates(&self) -> Result<Rates> {
        Ok(self.automation.bayes_rates(&self.costs, self.prior, 0)?)
    }

    /// Violated trade-off conditions between the human law and the automation.
    pub fn tradeoff_violations(&self) -> Vec<String> {
        self.human_law.tradeoff_violations(&self.automation)
    }
}

/// Draws an instance from the scenario's parameter laws.
///
/// Draw order is fixed: automation sigma, human sigma, `c_fp`, `c_fn`,
/// `c_tp`, `c_tn`, `c_r`.
pub fn sample_problem_instance<R: Rng + ?Sized>(config: &ScenarioConfig, id: usize, rng: &mut R) -> Result<ProblemInstance> {
    let sigma_a = config.automation.sigma.sample(rng);
    let sigma0 = config.human_law.sigma0.sample(rng);
    let c = &config.costs;
    let c_fp = c.c_fp.sample(rng);
    let c_fn = c.c_fn.sample(rng);
    let c_tp = c.c_tp.sample(rng);
    let c_tn = c.c_tn.sample(rng);
    let c_r = c.c_r.sample(rng);
    Ok(ProblemInstance {
        id,
        prior: Prior::new(1.0 - config.prior.pi0)?,
        automation: GaussianObsModel::shifted(config.automation.separation, sigma_a)?,
        human_law: HumanObsLaw::new(config.human_law.case, config.human_law.mu0, sigma0, config.k)?,
        costs: DecisionCosts::new(c_tp, c_fp, c_tn, c_fn, c_r)?,
        k: config.k,
        load_set: config.load_set(),
    })
}

/// `k` tasks with states drawn from the prior and posteriors from one
/// automation observation each. True states are kept for scoring.
pub fn generate_batch<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> Batch {
    let tasks = (0..instance.k)
        .map(|i| {
            let truth = Hypothesis::from_positive(rng.random_bool(instance.prior.pi1()));
            let y = instance.automation.sample(truth, rng);
            Task::new(i as TaskId, instance.automation.posterior(instance.prior, y)).with_truth(truth)
        })
        .collect();
    Batch::new(tasks).expect("sequential ids are unique")
}

/// A policy with its constant load, if any, already fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Oa,
    Ba(usize),
    Sa(usize),
}

impl Policy {
    pub fn kind(self) -> PolicyKind {
        match self {
            Policy::Oa => PolicyKind::Oa,
            Policy::Ba(_) => PolicyKind::Ba,
            Policy::Sa(_) => PolicyKind::Sa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// Cost of the decisions actually made, including `c_r` per referral.
    pub realized_cost: f64,
    /// Team cost of the plan given the posteriors.
    pub expected_cost: f64,
    pub load: usize,
}

/// Everything needed to run policies on batches of one instance.
#[derive(Debug, Clone)]
pub struct InstanceRunner {
    pub instance: ProblemInstance,
    human: AnalyticHuman,
    table: PerfTable,
}

impl InstanceRunner {
    pub fn new(instance: ProblemInstance) -> Result<Self> {
        let table = instance.human_table()?;
        Ok(InstanceRunner { human: instance.human(), table, instance })
    }

    pub fn human_table(&self) -> &PerfTable {
        &self.table
    }

    pub fn plan(&self, policy: Policy, batch: &Batch, select_rng: &mut dyn RngCore) -> Result<ReferralPlan> {
        let inst = &self.instance;
        Ok(match policy {
            Policy::Oa => optimal_referral(batch, &inst.load_set, &self.table, &inst.costs)?.plan,
            Policy::Ba(w) => ba_select(batch, w, &inst.costs, select_rng)?,
            Policy::Sa(w) => plan_for_load(batch, w, &self.table, &inst.costs)?,
        })
    }

    /// Realized cost of `plan` with the simulated human deciding the referred
    /// tasks in id order.
    pub fn realize(&self, plan: &ReferralPlan, batch: &Batch, human_rng: &mut dyn RngCore) -> Result<f64> {
        let costs = &self.instance.costs;
        let load = plan.load();
        let mut total = 0.0;
        for task in batch.tasks() {
            let truth = task.true_state.ok_or_else(|| Error::InvalidParameter(format!("task {} has no true state", task.id)))?;
            total += if plan.referred.contains(&task.id) {
                costs.cost(self.human.decide(truth, load, human_rng)?, truth) + costs.c_r()
            } else {
                let d = plan.terminal.get(&task.id).ok_or_else(|| Error::PlanMismatch(format!("task {} has no decision", task.id)))?;
                costs.cost(*d, truth)
            };
        }
        Ok(total)
    }

    pub fn run_policy_on_batch(&self, policy: Policy, batch: &Batch, select_rng: &mut dyn RngCore, human_rng: &mut dyn RngCore) -> Result<Outcome> {
        let plan = self.plan(policy, batch, select_rng)?;
        let expected_cost = refereval_core::team_cost(&plan, batch, &self.table, &self.instance.costs)?;
        let realized_cost = self.realize(&plan, batch, human_rng)?;
        Ok(Outcome { realized_cost, expected_cost, load: plan.load() })
    }

    /// Constant load of blind allocation for this instance.
    pub fn ba_load(&self) -> Result<usize> {
        let inst = &self.instance;
        Ok(ba_workload(inst.prior, inst.automation_rates()?, &self.table, &inst.costs, &inst.load_set, inst.k)?)
    }

    /// Constant load of static allocation, estimated on `n_samples` batches
    /// drawn from streams `(Estimation, 0, j)` of `seeds`. Every load is
    /// scored on the same batches and the result does not depend on the
    /// number of worker threads.
    pub fn sa_load(&self, n_samples: usize, seeds: &SeedTree) -> Result<usize> {
        let inst = &self.instance;
        let rows = (0..n_samples)
            .into_par_iter()
            .map(|j| {
                let batch = generate_batch(inst, &mut seeds.stream(StreamKind::Estimation, 0, j as u64));
                fixed_load_costs(&batch, &inst.load_set, &self.table, &inst.costs)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(argmin_load(&mean_fixed_load_costs(&inst.load_set, &rows)?)?)
    }
}

/// Static-allocation load from `n_samples` fresh batches, keyed by one draw from `rng`.
pub fn sa_workload<R: Rng + ?Sized>(instance: &ProblemInstance, n_samples: usize, rng: &mut R) -> Result<usize> {
    InstanceRunner::new(instance.clone())?.sa_load(n_samples, &SeedTree::new(rng.next_u64()))
}
