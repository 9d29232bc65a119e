//! The full study: instances × batches × policies.

use rayon::prelude::*;
use refereval_core::rng::{SeedTree, StreamKind};
use serde::{Deserialize, Serialize};

use crate::config::{PolicyKind, ScenarioConfig};
use crate::error::{Result, SimError};
use crate::instance::{generate_batch, sample_problem_instance, InstanceRunner, Policy, ProblemInstance};

/// One policy run on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub instance_id: usize,
    pub policy: PolicyKind,
    pub batch_id: usize,
    pub realized_cost: f64,
    pub expected_cost: f64,
    pub load: usize,
}

/// Per-instance parameters and the constant loads fixed before the batch loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance: ProblemInstance,
    pub ba_load: Option<usize>,
    pub sa_load: Option<usize>,
    pub tradeoff_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResults {
    pub seed: u64,
    pub config: ScenarioConfig,
    pub instances: Vec<InstanceRecord>,
    /// Ordered by instance, then batch, then policy in configuration order.
    pub rows: Vec<StudyRow>,
}

const MAX_BATCHES: usize = 1 << 26;

/// Runs the configured study. `workers = None` uses rayon's default pool size.
/// The output depends only on the configuration, never on `workers`.
pub fn run_study(config: &ScenarioConfig, workers: Option<usize>) -> Result<StudyResults> {
    config.validate()?;
    if config.study.n_batches >= MAX_BATCHES || config.study.sa_batches >= MAX_BATCHES || config.study.n_instances >= MAX_BATCHES {
        return Err(SimError::Config(format!("counts must stay below {MAX_BATCHES}")));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| SimError::Pool(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ScenarioConfig) -> Result<StudyResults> {
    let seeds = SeedTree::new(config.study.seed);
    let policies = &config.study.policies;
    let mut instances = Vec::with_capacity(config.study.n_instances);
    let mut rows = Vec::with_capacity(config.study.n_instances * config.study.n_batches * policies.len());
    for i in 0..config.study.n_instances {
        let ii = i as u64;
        let instance = sample_problem_instance(config, i, &mut seeds.stream(StreamKind::Instance, ii, 0))?;
        let runner = InstanceRunner::new(instance)?;
        let ba_load = policies.contains(&PolicyKind::Ba).then(|| runner.ba_load()).transpose()?;
        let sa_load = policies
            .contains(&PolicyKind::Sa)
            .then(|| runner.sa_load(config.study.sa_batches, &seeds.child(StreamKind::Estimation, ii, 0)))
            .transpose()?;
        let resolved: Vec<Policy> = policies
            .iter()
            .map(|p| match p {
                PolicyKind::Oa => Policy::Oa,
                PolicyKind::Ba => Policy::Ba(ba_load.expect("computed above")),
                PolicyKind::Sa => Policy::Sa(sa_load.expect("computed above")),
            })
            .collect();

        let per_batch = (0..config.study.n_batches)
            .into_par_iter()
            .map(|b| {
                let bb = b as u64;
                let batch = generate_batch(&runner.instance, &mut seeds.stream(StreamKind::Batch, ii, bb));
                resolved
                    .iter()
                    .map(|&policy| {
                        let kind = policy.kind();
                        let mut select = seeds.stream(StreamKind::Selection, ii, bb);
                        let mut human = seeds.stream(StreamKind::Human, ii, bb * 4 + kind.stream_index());
                        let out = runner.run_policy_on_batch(policy, &batch, &mut select, &mut human)?;
                        Ok(StudyRow {
                            instance_id: i,
                            policy: kind,
                            batch_id: b,
                            realized_cost: out.realized_cost,
                            expected_cost: out.expected_cost,
                            load: out.load,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(per_batch.into_iter().flatten());
        instances.push(InstanceRecord {
            tradeoff_violations: runner.instance.tradeoff_violations(),
            instance: runner.instance,
            ba_load,
            sa_load,
        });
    }
    Ok(StudyResults { seed: config.study.seed, config: config.clone(), instances, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_instances: usize, n_batches: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.study.n_instances = n_instances;
        cfg.study.n_batches = n_batches;
        cfg.study.sa_batches = 50;
        cfg
    }

    #[test]
    fn one_by_one_gives_three_rows() {
        let r = run_study(&small(1, 1), Some(1)).unwrap();
        assert_eq!(r.rows.len(), 3);
        let kinds: Vec<_> = r.rows.iter().map(|row| row.policy).collect();
        assert_eq!(kinds, vec![PolicyKind::Oa, PolicyKind::Ba, PolicyKind::Sa]);
        assert_eq!(r.instances.len(), 1);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = small(2, 40);
        let a = run_study(&cfg, Some(1)).unwrap();
        let b = run_study(&cfg, Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn policies_can_be_subset() {
        let mut cfg = small(1, 3);
        cfg.study.policies = vec![PolicyKind::Sa];
        let r = run_study(&cfg, Some(2)).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.instances[0].ba_load.is_none() && r.instances[0].sa_load.is_some());
    }

    #[test]
    fn oa_load_is_feasible_and_dominates() {
        let mut cfg = small(2, 60);
        cfg.load_set = Some(vec![0, 2, 4, 8, 12]);
        let r = run_study(&cfg, None).unwrap();
        for row in &r.rows {
            assert!(cfg.load_set.as_ref().unwrap().contains(&row.load) || row.policy == PolicyKind::Ba);
        }
        for chunk in r.rows.chunks(3) {
            assert!(chunk[0].expected_cost <= chunk[1].expected_cost + 1e-9);
            assert!(chunk[0].expected_cost <= chunk[2].expected_cost + 1e-9);
        }
    }
}
