//! Posteriors, expected decision costs, referral indices and team cost.
//!
//! Everything here is a pure function of small value types. The automation's
//! cost for deciding a task itself is affine in the posterior `p`, the optimal
//! automation cost is the lower envelope of the two affine pieces, and the
//! human's cost at a fixed load is again affine in `p`. The referral index is
//! the difference between the optimal automation cost and the human cost: how
//! much expected cost is saved by sending the task to the human.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{PerfModel, Rates};

pub type TaskId = u32;

/// State of a task, and also the label of a decision about it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Non-hostile.
    H0,
    /// Hostile.
    H1,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];

    pub fn is_positive(self) -> bool {
        self == Hypothesis::H1
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Hypothesis::H1
        } else {
            Hypothesis::H0
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        })
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

/// Prior probability that a task is hostile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub struct Prior {
    pi1: f64,
}

#[derive(Serialize, Deserialize)]
struct PriorRepr {
    pi1: f64,
}

impl TryFrom<PriorRepr> for Prior {
    type Error = Error;
    fn try_from(r: PriorRepr) -> Result<Self> {
        Prior::new(r.pi1)
    }
}

impl From<Prior> for PriorRepr {
    fn from(p: Prior) -> Self {
        PriorRepr { pi1: p.pi1 }
    }
}

impl Prior {
    pub fn new(pi1: f64) -> Result<Self> {
        check_probability("pi1", pi1).map(|pi1| Prior { pi1 })
    }

    pub fn pi1(&self) -> f64 {
        self.pi1
    }

    pub fn pi0(&self) -> f64 {
        1.0 - self.pi1
    }

    pub fn of(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::H0 => self.pi0(),
            Hypothesis::H1 => self.pi1,
        }
    }
}

/// Belief that a task is hostile given an observation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Posterior(f64);

impl Posterior {
    pub fn new(p: f64) -> Result<Self> {
        check_probability("posterior", p).map(Posterior)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Posterior {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Posterior::new(p)
    }
}

impl From<Posterior> for f64 {
    fn from(p: Posterior) -> f64 {
        p.0
    }
}

/// Terminal decision costs plus the per-task referral cost.
///
/// Misclassifying must cost strictly more than classifying correctly under
/// both hypotheses, otherwise the Bayes threshold is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostsRepr", into = "CostsRepr")]
pub struct DecisionCosts {
    tp: f64,
    fp: f64,
    tn: f64,
    fn_: f64,
    r: f64,
}

#[derive(Serialize, Deserialize)]
struct CostsRepr {
    c_tp: f64,
    c_fp: f64,
    c_tn: f64,
    c_fn: f64,
    #[serde(default)]
    c_r: f64,
}

impl TryFrom<CostsRepr> for DecisionCosts {
    type Error = Error;
    fn try_from(c: CostsRepr) -> Result<Self> {
        DecisionCosts::new(c.c_tp, c.c_fp, c.c_tn, c.c_fn, c.c_r)
    }
}

impl From<DecisionCosts> for CostsRepr {
    fn from(c: DecisionCosts) -> Self {
        CostsRepr { c_tp: c.tp, c_fp: c.fp, c_tn: c.tn, c_fn: c.fn_, c_r: c.r }
    }
}

impl DecisionCosts {
    /// Argument order follows the usual `tp, fp, tn, fn` listing, then the referral cost.
    pub fn new(c_tp: f64, c_fp: f64, c_tn: f64, c_fn: f64, c_r: f64) -> Result<Self> {
        let all = [c_tp, c_fp, c_tn, c_fn, c_r];
        if all.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCosts("costs must be finite".into()));
        }
        if all.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidCosts("costs must be nonnegative".into()));
        }
        if c_fp <= c_tn {
            return Err(Error::InvalidCosts(format!("need c_fp > c_tn, got {c_fp} <= {c_tn}")));
        }
        if c_fn <= c_tp {
            return Err(Error::InvalidCosts(format!("need c_fn > c_tp, got {c_fn} <= {c_tp}")));
        }
        Ok(DecisionCosts { tp: c_tp, fp: c_fp, tn: c_tn, fn_: c_fn, r: c_r })
    }

    pub fn c_tp(&self) -> f64 {
        self.tp
    }
    pub fn c_fp(&self) -> f64 {
        self.fp
    }
    pub fn c_tn(&self) -> f64 {
        self.tn
    }
    pub fn c_fn(&self) -> f64 {
        self.fn_
    }
    pub fn c_r(&self) -> f64 {
        self.r
    }

    /// Cost of deciding `decision` when the truth is `truth`.
    pub fn cost(&self, decision: Hypothesis, truth: Hypothesis) -> f64 {
        use Hypothesis::*;
        match (decision, truth) {
            (H1, H1) => self.tp,
            (H1, H0) => self.fp,
            (H0, H0) => self.tn,
            (H0, H1) => self.fn_,
        }
    }

    /// Posterior at which both terminal decisions have equal expected cost.
    pub fn threshold(&self) -> f64 {
        (self.fp - self.tn) / (self.fp - self.tn + self.fn_ - self.tp)
    }

    /// Every cost multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {factor}")));
        }
        DecisionCosts::new(self.tp * factor, self.fp * factor, self.tn * factor, self.fn_ * factor, self.r * factor)
    }

    pub fn with_referral_cost(&self, c_r: f64) -> Result<Self> {
        DecisionCosts::new(self.tp, self.fp, self.tn, self.fn_, c_r)
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bayes rule for a binary state.
///
/// Evaluated through log-likelihoods so that tiny likelihoods far in the tails
/// do not underflow the ratio.
pub fn posterior_from_likelihoods(prior: Prior, lik0: f64, lik1: f64) -> Result<Posterior> {
    for (name, v) in [("lik0", lik0), ("lik1", lik1)] {
        if !(v >= 0.0) || v.is_infinite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    posterior_from_log_likelihoods(prior, lik0.ln(), lik1.ln())
}

/// Bayes rule from log-likelihoods; `-inf` encodes a zero likelihood.
pub fn posterior_from_log_likelihoods(prior: Prior, log_lik0: f64, log_lik1: f64) -> Result<Posterior> {
    let w0 = prior.pi0().ln() + log_lik0;
    let w1 = prior.pi1().ln() + log_lik1;
    match (w0 == f64::NEG_INFINITY, w1 == f64::NEG_INFINITY) {
        (true, true) => Err(Error::DegenerateEvidence),
        (true, false) => Ok(Posterior(1.0)),
        (false, true) => Ok(Posterior(0.0)),
        (false, false) => Ok(Posterior(logistic(w1 - w0))),
    }
}

/// Bayes rule from the log-likelihood ratio `ln P(y|H1) - ln P(y|H0)`.
pub fn posterior_from_log_likelihood_ratio(prior: Prior, llr: f64) -> Result<Posterior> {
    posterior_from_log_likelihoods(prior, 0.0, llr)
}

/// Expected cost of the automation deciding `decision` on a task with posterior `p`.
pub fn automation_cost(p: Posterior, decision: Hypothesis, costs: &DecisionCosts) -> f64 {
    let p = p.0;
    (1.0 - p) * costs.cost(decision, Hypothesis::H0) + p * costs.cost(decision, Hypothesis::H1)
}

/// Minimum over both terminal decisions of [`automation_cost`].
pub fn optimal_automation_cost(p: Posterior, costs: &DecisionCosts) -> f64 {
    automation_cost(p, Hypothesis::H0, costs).min(automation_cost(p, Hypothesis::H1, costs))
}

/// Bayes decision of the automation. An exact tie goes to `H0`.
///
/// `cost(H0) <= cost(H1)` is rearranged to `p <= threshold`; comparing the
/// two products directly misplaces ties by an ulp (e.g. `0.4 * 12 > 0.6 * 8`).
pub fn automation_decision(p: Posterior, costs: &DecisionCosts) -> Hypothesis {
    if p.0 <= costs.threshold() {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    }
}

/// Expected cost of referring a task with posterior `p` when the human's
/// operating point is `rates`. Includes the referral cost.
pub fn human_cost_with_rates(p: Posterior, rates: Rates, costs: &DecisionCosts) -> f64 {
    let p = p.0;
    let negative = rates.fpr() * costs.fp + (1.0 - rates.fpr()) * costs.tn;
    let positive = rates.tpr() * costs.tp + (1.0 - rates.tpr()) * costs.fn_;
    costs.r + (1.0 - p) * negative + p * positive
}

/// Expected cost of referring a task with posterior `p` to a human carrying `load` tasks.
pub fn human_cost<M: PerfModel + ?Sized>(p: Posterior, load: usize, perf: &M, costs: &DecisionCosts) -> Result<f64> {
    Ok(human_cost_with_rates(p, perf.rates(load)?, costs))
}

pub fn referral_index_with_rates(p: Posterior, rates: Rates, costs: &DecisionCosts) -> f64 {
    optimal_automation_cost(p, costs) - human_cost_with_rates(p, rates, costs)
}

/// Expected cost saved by referring the task instead of letting the automation decide.
pub fn referral_index<M: PerfModel + ?Sized>(p: Posterior, load: usize, perf: &M, costs: &DecisionCosts) -> Result<f64> {
    Ok(referral_index_with_rates(p, perf.rates(load)?, costs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub posterior: Posterior,
    /// Only known in simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_state: Option<Hypothesis>,
}

impl Task {
    pub fn new(id: TaskId, posterior: Posterior) -> Self {
        Task { id, posterior, true_state: None }
    }

    pub fn with_truth(mut self, truth: Hypothesis) -> Self {
        self.true_state = Some(truth);
        self
    }
}

/// An ordered batch of tasks with unique ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Batch {
    tasks: Vec<Task>,
}

impl Batch {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(tasks.len());
        for t in &tasks {
            if !seen.insert(t.id) {
                return Err(Error::DuplicateTask(t.id));
            }
        }
        Ok(Batch { tasks })
    }

    /// Tasks numbered `0..n` in order.
    pub fn from_posteriors(posteriors: &[f64]) -> Result<Self> {
        let tasks = posteriors
            .iter()
            .enumerate()
            .map(|(i, &p)| Ok(Task::new(i as TaskId, Posterior::new(p)?)))
            .collect::<Result<Vec<_>>>()?;
        Batch::new(tasks)
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: TaskId) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

impl<'de> Deserialize<'de> for Batch {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            tasks: Vec<Task>,
        }
        let r = Repr::deserialize(d)?;
        Batch::new(r.tasks).map_err(serde::de::Error::custom)
    }
}

/// Which tasks go to the human, and the automation's decision on the rest.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReferralPlan {
    pub referred: BTreeSet<TaskId>,
    pub terminal: BTreeMap<TaskId, Hypothesis>,
}

impl ReferralPlan {
    /// Refer `referred`; every other task in `batch` gets the automation's Bayes decision.
    pub fn with_bayes_decisions(batch: &Batch, referred: BTreeSet<TaskId>, costs: &DecisionCosts) -> Self {
        let terminal = batch
            .tasks()
            .iter()
            .filter(|t| !referred.contains(&t.id))
            .map(|t| (t.id, automation_decision(t.posterior, costs)))
            .collect();
        ReferralPlan { referred, terminal }
    }

    pub fn load(&self) -> usize {
        self.referred.len()
    }

    /// Checks that the plan partitions exactly the ids of `batch`.
    pub fn check_against(&self, batch: &Batch) -> Result<()> {
        if let Some(id) = self.referred.iter().find(|id| self.terminal.contains_key(id)) {
            return Err(Error::PlanMismatch(format!("task {id} is both referred and decided")));
        }
        if self.referred.len() + self.terminal.len() != batch.len() {
            return Err(Error::PlanMismatch(format!(
                "plan covers {} tasks, batch has {}",
                self.referred.len() + self.terminal.len(),
                batch.len()
            )));
        }
        for t in batch.tasks() {
            if !self.referred.contains(&t.id) && !self.terminal.contains_key(&t.id) {
                return Err(Error::PlanMismatch(format!("task {} is not covered", t.id)));
            }
        }
        Ok(())
    }
}

/// Expected total cost of `plan` from the automation's point of view.
pub fn team_cost<M: PerfModel + ?Sized>(plan: &ReferralPlan, batch: &Batch, perf: &M, costs: &DecisionCosts) -> Result<f64> {
    plan.check_against(batch)?;
    let load = plan.load();
    let rates = if load > 0 { Some(perf.rates(load)?) } else { None };
    let mut total = 0.0;
    for t in batch.tasks() {
        total += match (plan.terminal.get(&t.id), rates) {
            (Some(&d), _) => automation_cost(t.posterior, d, costs),
            (None, Some(r)) => human_cost_with_rates(t.posterior, r, costs),
            (None, None) => unreachable!("checked plan refers a task at load 0"),
        };
    }
    Ok(total)
}
