//! Referral policies.
//!
//! * Optimal allocation (`oa`): for every feasible load `w`, refer the `w`
//!   tasks with the largest referral indices; keep the load whose summed
//!   index (the cost reduction) is largest.
//! * Blind allocation (`ba`): a constant load fixed in advance from average
//!   automation and human costs, filled with uniformly random tasks.
//! * Static allocation (`sa`): a constant load fixed in advance by minimising
//!   the expected fixed-load optimum over sampled batches, filled with the
//!   top-index tasks.
//!
//! Ties are resolved deterministically: equal indices prefer the lower task
//! id, equal cost reductions prefer the smaller load.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{optimal_automation_cost, referral_index_with_rates, team_cost, Batch, DecisionCosts, Prior, ReferralPlan, TaskId};
use crate::error::{Error, Result};
use crate::models::{PerfModel, Rates};

/// Feasible task loads, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LoadSet {
    loads: Vec<usize>,
}

impl TryFrom<Vec<usize>> for LoadSet {
    type Error = Error;
    fn try_from(mut loads: Vec<usize>) -> Result<Self> {
        loads.sort_unstable();
        loads.dedup();
        if loads.is_empty() {
            return Err(Error::InvalidLoadSet("no feasible load".into()));
        }
        Ok(LoadSet { loads })
    }
}

impl From<LoadSet> for Vec<usize> {
    fn from(l: LoadSet) -> Self {
        l.loads
    }
}

impl LoadSet {
    /// Loads for batches of `batch_size` tasks; every load must be at most `batch_size`.
    pub fn new(loads: impl IntoIterator<Item = usize>, batch_size: usize) -> Result<Self> {
        let set = LoadSet::try_from(loads.into_iter().collect::<Vec<_>>())?;
        set.check_batch_size(batch_size)?;
        Ok(set)
    }

    /// `{0, 1, ..., batch_size}`.
    pub fn full(batch_size: usize) -> Self {
        LoadSet { loads: (0..=batch_size).collect() }
    }

    pub fn check_batch_size(&self, batch_size: usize) -> Result<()> {
        match self.max() {
            m if m > batch_size => Err(Error::InvalidLoadSet(format!("load {m} exceeds batch size {batch_size}"))),
            _ => Ok(()),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.loads
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.loads.iter().copied()
    }

    pub fn min(&self) -> usize {
        self.loads[0]
    }

    pub fn max(&self) -> usize {
        *self.loads.last().unwrap()
    }

    pub fn contains(&self, w: usize) -> bool {
        self.loads.binary_search(&w).is_ok()
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }
}

/// Referral set for one fixed load and the cost reduction it buys.
#[derive(Debug, Clone, PartialEq)]
pub struct TopReferral {
    pub referred: BTreeSet<TaskId>,
    pub delta: f64,
}

fn by_index_desc(a: &(f64, TaskId), b: &(f64, TaskId)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn top_w_with_rates(batch: &Batch, w: usize, rates: Rates, costs: &DecisionCosts, scratch: &mut Vec<(f64, TaskId)>) -> TopReferral {
    scratch.clear();
    scratch.extend(batch.tasks().iter().map(|t| (referral_index_with_rates(t.posterior, rates, costs), t.id)));
    if w < scratch.len() {
        scratch.select_nth_unstable_by(w, by_index_desc);
        scratch.truncate(w);
    }
    scratch.sort_unstable_by(by_index_desc);
    TopReferral { referred: scratch.iter().map(|&(_, id)| id).collect(), delta: scratch.iter().map(|&(r, _)| r).sum() }
}

fn check_load(batch: &Batch, w: usize) -> Result<()> {
    if w > batch.len() {
        return Err(Error::LoadExceedsBatch { load: w, batch_size: batch.len() });
    }
    Ok(())
}

/// The `w` tasks with the largest referral indices at load `w`.
pub fn top_w_referral<M: PerfModel + ?Sized>(batch: &Batch, w: usize, perf: &M, costs: &DecisionCosts) -> Result<TopReferral> {
    check_load(batch, w)?;
    if w == 0 {
        return Ok(TopReferral { referred: BTreeSet::new(), delta: 0.0 });
    }
    Ok(top_w_with_rates(batch, w, perf.rates(w)?, costs, &mut Vec::with_capacity(batch.len())))
}

/// Fixed-load plan: top-`w` referral plus Bayes decisions for the rest.
pub fn plan_for_load<M: PerfModel + ?Sized>(batch: &Batch, w: usize, perf: &M, costs: &DecisionCosts) -> Result<ReferralPlan> {
    let top = top_w_referral(batch, w, perf, costs)?;
    Ok(ReferralPlan::with_bayes_decisions(batch, top.referred, costs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub plan: ReferralPlan,
    /// Chosen load.
    pub load: usize,
    /// Cost reduction at the chosen load.
    pub delta: f64,
    pub per_load_delta: BTreeMap<usize, f64>,
}

/// Optimal referral: the plan with the smallest expected team cost among all
/// plans whose load is in `loads`.
pub fn optimal_referral<M: PerfModel + ?Sized>(batch: &Batch, loads: &LoadSet, perf: &M, costs: &DecisionCosts) -> Result<AllocationResult> {
    loads.check_batch_size(batch.len())?;
    let mut scratch = Vec::with_capacity(batch.len());
    let mut best: Option<(usize, TopReferral)> = None;
    let mut per_load_delta = BTreeMap::new();
    for w in loads.iter() {
        let top = if w == 0 {
            TopReferral { referred: BTreeSet::new(), delta: 0.0 }
        } else {
            top_w_with_rates(batch, w, perf.rates(w)?, costs, &mut scratch)
        };
        per_load_delta.insert(w, top.delta);
        if best.as_ref().is_none_or(|(_, b)| top.delta > b.delta) {
            best = Some((w, top));
        }
    }
    let (load, top) = best.expect("load set is nonempty");
    Ok(AllocationResult {
        plan: ReferralPlan::with_bayes_decisions(batch, top.referred, costs),
        load,
        delta: top.delta,
        per_load_delta,
    })
}

/// Sum of the optimal automation costs: the team cost of referring nothing.
pub fn automation_only_cost(batch: &Batch, costs: &DecisionCosts) -> f64 {
    batch.tasks().iter().map(|t| optimal_automation_cost(t.posterior, costs)).sum()
}

/// Expected cost of a constant-load blind policy at each feasible load:
/// `(K - w) * mean automation cost + w * mean human cost at load w`.
pub fn blind_costs<M: PerfModel + ?Sized>(
    prior: Prior,
    automation: Rates,
    perf: &M,
    costs: &DecisionCosts,
    loads: &LoadSet,
    batch_size: usize,
) -> Result<BTreeMap<usize, f64>> {
    loads.check_batch_size(batch_size)?;
    let auto = automation.mean_cost(prior, costs);
    loads
        .iter()
        .map(|w| {
            let human = if w == 0 { 0.0 } else { costs.c_r() + perf.rates(w)?.mean_cost(prior, costs) };
            Ok((w, (batch_size - w) as f64 * auto + w as f64 * human))
        })
        .collect()
}

/// Load used by blind allocation. Ties go to the smaller load.
pub fn ba_workload<M: PerfModel + ?Sized>(
    prior: Prior,
    automation: Rates,
    perf: &M,
    costs: &DecisionCosts,
    loads: &LoadSet,
    batch_size: usize,
) -> Result<usize> {
    let table = blind_costs(prior, automation, perf, costs, loads, batch_size)?;
    Ok(argmin(&table))
}

fn argmin(values: &BTreeMap<usize, f64>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (&w, &v) in values {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((w, v));
        }
    }
    best.expect("nonempty").0
}

/// Blind selection: `w` tasks chosen uniformly at random, Bayes decisions for the rest.
pub fn ba_select<R: Rng + ?Sized>(batch: &Batch, w: usize, costs: &DecisionCosts, rng: &mut R) -> Result<ReferralPlan> {
    check_load(batch, w)?;
    let picked = rand::seq::index::sample(rng, batch.len(), w);
    let referred = picked.iter().map(|i| batch.tasks()[i].id).collect();
    Ok(ReferralPlan::with_bayes_decisions(batch, referred, costs))
}

/// Team cost of the fixed-load optimum for every load in `loads`, in load order.
pub fn fixed_load_costs<M: PerfModel + ?Sized>(batch: &Batch, loads: &LoadSet, perf: &M, costs: &DecisionCosts) -> Result<Vec<f64>> {
    loads.iter().map(|w| team_cost(&plan_for_load(batch, w, perf, costs)?, batch, perf, costs)).collect()
}

/// Mean fixed-load cost per load, from per-batch rows produced by
/// [`fixed_load_costs`]. Rows are summed in the order given.
pub fn mean_fixed_load_costs(loads: &LoadSet, rows: &[Vec<f64>]) -> Result<BTreeMap<usize, f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("static allocation needs at least one sample batch".into()));
    }
    let mut sums = vec![0.0; loads.len()];
    for row in rows {
        if row.len() != loads.len() {
            return Err(Error::InvalidParameter("cost row length differs from load set".into()));
        }
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = rows.len() as f64;
    Ok(loads.iter().zip(sums).map(|(w, s)| (w, s / n)).collect())
}

/// Load used by static allocation, estimated from sample batches. All loads
/// are scored on the same batches. Ties go to the smaller load.
pub fn sa_workload<M: PerfModel + ?Sized>(batches: &[Batch], loads: &LoadSet, perf: &M, costs: &DecisionCosts) -> Result<usize> {
    let rows = batches.iter().map(|b| fixed_load_costs(b, loads, perf, costs)).collect::<Result<Vec<_>>>()?;
    Ok(argmin(&mean_fixed_load_costs(loads, &rows)?))
}

/// Load chosen from precomputed mean costs.
pub fn argmin_load(mean_costs: &BTreeMap<usize, f64>) -> Result<usize> {
    if mean_costs.is_empty() {
        return Err(Error::InvalidLoadSet("no feasible load".into()));
    }
    Ok(argmin(mean_costs))
}
