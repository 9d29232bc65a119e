//! Exhaustive checks of the allocation policies on small random instances.
//!
//! Every subset of a batch is scored with the same `team_cost` the policies
//! use, with Bayes decisions on the unreferred tasks, so a match is exact
//! unless two different subsets tie to within rounding.

use rand::Rng;
use refereval_core::models::PerfTable;
use refereval_core::policies::top_w_referral;
use refereval_core::rng::{SeedTree, StreamKind};
use refereval_core::{optimal_referral, team_cost, Batch, DecisionCosts, LoadSet, ReferralPlan, Result, Task};

/// Largest batch the exhaustive search accepts.
pub const MAX_K: usize = 12;

/// Absolute tolerance for a match that is not bitwise.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub batch: Batch,
    pub perf: PerfTable,
    pub costs: DecisionCosts,
}

/// A batch of `k` uniform posteriors, arbitrary rates at every load
/// `1..=k`, and random valid costs.
pub fn random_instance<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<OracleInstance> {
    let tasks = (0..k).map(|i| Ok(Task::new(i as u32, refereval_core::Posterior::new(rng.random::<f64>())?))).collect::<Result<Vec<_>>>()?;
    let loads: Vec<usize> = (1..=k.max(1)).collect();
    let tpr = loads.iter().map(|_| rng.random_range(0.3..1.0)).collect();
    let fpr = loads.iter().map(|_| rng.random_range(0.0..0.7)).collect();
    let costs = DecisionCosts::new(rng.random_range(0.0..2.0), rng.random_range(4.0..15.0), rng.random_range(0.0..2.0), rng.random_range(4.0..15.0), rng.random_range(0.0..1.0))?;
    Ok(OracleInstance { batch: Batch::new(tasks)?, perf: PerfTable::new(loads, tpr, fpr)?, costs })
}

/// Team cost of every subset, indexed by bit mask.
pub fn subset_costs(inst: &OracleInstance) -> Result<Vec<f64>> {
    let k = inst.batch.len();
    assert!(k <= MAX_K, "exhaustive search limited to K <= {MAX_K}");
    (0u32..1 << k)
        .map(|mask| {
            let referred = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| inst.batch.tasks()[i].id).collect();
            team_cost(&ReferralPlan::with_bayes_decisions(&inst.batch, referred, &inst.costs), &inst.batch, &inst.perf, &inst.costs)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub checks: usize,
    pub exact: usize,
    /// Not bitwise equal but within `TOLERANCE`.
    pub within_tolerance: usize,
    pub mismatches: usize,
}

impl OracleReport {
    fn record(&mut self, got: f64, best: f64) {
        self.checks += 1;
        if got.to_bits() == best.to_bits() {
            self.exact += 1;
        } else if (got - best).abs() <= TOLERANCE {
            self.within_tolerance += 1;
        } else {
            self.mismatches += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.checks > 0
    }
}

fn check_k(k_max: usize) -> Result<()> {
    if k_max == 0 || k_max > MAX_K {
        return Err(refereval_core::Error::InvalidParameter(format!("K must be in 1..={MAX_K}, got {k_max}")));
    }
    Ok(())
}

/// Optimal load and tasks: `optimal_referral` over all loads `0..=K`
/// against the minimum over all `2^K` subsets. One check per trial.
pub fn optimal_load_suite(k_max: usize, trials: usize, seed: u64) -> Result<OracleReport> {
    check_k(k_max)?;
    let seeds = SeedTree::new(seed);
    let mut report = OracleReport::default();
    for t in 0..trials {
        let mut rng = seeds.stream(StreamKind::Misc, 2, t as u64);
        let k = rng.random_range(1..=k_max);
        let inst = random_instance(k, &mut rng)?;
        let best = subset_costs(&inst)?.into_iter().fold(f64::INFINITY, f64::min);
        let plan = optimal_referral(&inst.batch, &LoadSet::full(k), &inst.perf, &inst.costs)?.plan;
        report.record(team_cost(&plan, &inst.batch, &inst.perf, &inst.costs)?, best);
    }
    Ok(report)
}

/// Fixed load: `top_w_referral` against the minimum over all `C(K, w)`
/// subsets of size `w`. One check per trial and load.
pub fn fixed_load_suite(k_max: usize, trials: usize, seed: u64) -> Result<OracleReport> {
    check_k(k_max)?;
    let seeds = SeedTree::new(seed);
    let mut report = OracleReport::default();
    for t in 0..trials {
        let mut rng = seeds.stream(StreamKind::Misc, 1, t as u64);
        let k = rng.random_range(1..=k_max);
        let inst = random_instance(k, &mut rng)?;
        let costs = subset_costs(&inst)?;
        for w in 0..=k {
            let best = costs.iter().enumerate().filter(|(mask, _)| mask.count_ones() as usize == w).map(|(_, c)| *c).fold(f64::INFINITY, f64::min);
            let top = top_w_referral(&inst.batch, w, &inst.perf, &inst.costs)?;
            let plan = ReferralPlan::with_bayes_decisions(&inst.batch, top.referred, &inst.costs);
            report.record(team_cost(&plan, &inst.batch, &inst.perf, &inst.costs)?, best);
        }
    }
    Ok(report)
}
