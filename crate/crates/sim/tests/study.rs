use refereval_core::rng::{SeedTree, StreamKind};
use refereval_sim::export::{for_each_row, write_rows};
use refereval_sim::{export_results, read_meta, read_rows, run_study, sa_workload, sample_problem_instance, summarize, PolicyKind, ScenarioConfig, StudyRow};

fn config(n_instances: usize, n_batches: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.study.n_instances = n_instances;
    cfg.study.n_batches = n_batches;
    cfg.study.sa_batches = 200;
    cfg.study.seed = seed;
    cfg
}

#[test]
fn export_is_byte_identical_across_worker_counts() {
    let cfg = config(3, 100, 5);
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for workers in [1, 4, 8] {
        let path = dir.path().join(format!("w{workers}.csv"));
        export_results(&run_study(&cfg, Some(workers)).unwrap(), &path).unwrap();
        let meta = refereval_sim::export::meta_path(&path);
        files.push((std::fs::read(&path).unwrap(), std::fs::read(meta).unwrap()));
    }
    assert!(files.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn export_round_trips_with_metadata() {
    let cfg = config(2, 30, 11);
    let results = run_study(&cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    export_results(&results, &path).unwrap();
    assert_eq!(read_rows(&path).unwrap(), results.rows);
    let meta = read_meta(&path).unwrap();
    assert_eq!(meta.seed, 11);
    assert_eq!(meta.rows, results.rows.len());
    assert_eq!(meta.scenario, cfg);
    assert_eq!(meta.instances, results.instances);
}

#[test]
fn realized_cost_is_unbiased_for_expected_cost() {
    let results = run_study(&config(4, 500, 21), None).unwrap();
    let diffs: Vec<f64> = results.rows.iter().map(|r| r.realized_cost - r.expected_cost).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 3.0 * (var / n).sqrt(), "mean difference {mean}");
}

#[test]
fn optimal_allocation_has_lowest_mean_expected_cost() {
    let results = run_study(&config(5, 200, 3), None).unwrap();
    for s in summarize(&results.rows) {
        let oa = s.policies[&PolicyKind::Oa].mean_expected;
        assert!(oa <= s.policies[&PolicyKind::Ba].mean_expected);
        assert!(oa <= s.policies[&PolicyKind::Sa].mean_expected);
    }
    for r in results.rows.iter().filter(|r| r.policy == PolicyKind::Oa) {
        assert!(r.load <= 20);
    }
}

#[test]
fn static_load_is_stable_under_reseeding() {
    let cfg = ScenarioConfig::default();
    let instance = sample_problem_instance(&cfg, 0, &mut SeedTree::new(cfg.study.seed).stream(StreamKind::Instance, 0, 0)).unwrap();
    let loads: Vec<usize> = (0..100).map(|r| sa_workload(&instance, 2000, &mut SeedTree::new(1000 + r).stream(StreamKind::Misc, 0, 0)).unwrap()).collect();
    let mut counts = std::collections::BTreeMap::new();
    for w in &loads {
        *counts.entry(*w).or_insert(0) += 1;
    }
    let modal = counts.values().copied().max().unwrap();
    assert!(modal >= 95, "{counts:?}");
}

#[test]
fn large_file_streams() {
    let rows: Vec<StudyRow> = (0..150_000)
        .map(|i| StudyRow { instance_id: i / 6000, policy: [PolicyKind::Oa, PolicyKind::Ba, PolicyKind::Sa][i % 3], batch_id: (i / 3) % 2000, realized_cost: i as f64 * 0.5, expected_cost: 1.0, load: i % 21 })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    write_rows(&rows, &path).unwrap();
    let mut n = 0usize;
    let mut total = 0.0;
    for_each_row(&path, |r| {
        n += 1;
        total += r.realized_cost;
    })
    .unwrap();
    assert_eq!(n, 150_000);
    assert_eq!(total, rows.iter().map(|r| r.realized_cost).sum::<f64>());
}
