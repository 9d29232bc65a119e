//! Monte Carlo checks of the reference schema against the exact region
//! probabilities.

use refereval_core::models::PerfTable;
use refereval_core::rng::{SeedTree, StreamKind};
use refereval_core::{Hypothesis, Prior};
use refereval_microworld::{build_experiment2, DecisionTree, Experiment, ExperimentConfig, RoundPolicy};

fn experiment() -> Experiment {
    ExperimentConfig::reference().compile().unwrap()
}

/// Empirical (TPR, FPR) of `tree` over `n` samples per state.
fn empirical_rates(e: &Experiment, tree: &DecisionTree, n: usize, seed: u64) -> (f64, f64) {
    let seeds = SeedTree::new(seed);
    let mut positive = [0usize; 2];
    for (s, state) in Hypothesis::ALL.into_iter().enumerate() {
        let mut rng = seeds.stream(StreamKind::Misc, s as u64, 0);
        for _ in 0..n {
            if tree.classify(&e.schema().sample(state, &mut rng)).unwrap().label.is_positive() {
                positive[s] += 1;
            }
        }
    }
    (positive[1] as f64 / n as f64, positive[0] as f64 / n as f64)
}

#[test]
fn reference_trees_hit_target_rates() {
    let e = experiment();
    let n = 100_000;
    let (tpr, fpr) = empirical_rates(&e, e.human_tree(), n, 1);
    assert!((tpr - 0.87).abs() < 0.02 && (fpr - 0.046).abs() < 0.01, "human {tpr} {fpr}");
    let (tpr, fpr) = empirical_rates(&e, &e.automation_tree, n, 2);
    assert!((tpr - 0.81).abs() < 0.02 && (fpr - 0.18).abs() < 0.02, "automation {tpr} {fpr}");

    // The exact rates agree with the samples.
    for (tree, rates) in [(e.human_tree(), e.human_rates), (&e.automation_tree, e.automation_rates)] {
        let (tpr, fpr) = empirical_rates(&e, tree, n, 3);
        let se = |p: f64| (p * (1.0 - p) / n as f64).sqrt();
        assert!((tpr - rates.tpr()).abs() < 3.0 * se(rates.tpr()), "{tpr} vs {}", rates.tpr());
        assert!((fpr - rates.fpr()).abs() < 3.0 * se(rates.fpr()), "{fpr} vs {}", rates.fpr());
    }
}

/// Posterior and its delta-method standard error from leaf frequencies
/// estimated with `n` samples per state.
fn posterior_with_se(prior: Prior, l0: f64, l1: f64, n: usize) -> (f64, f64) {
    let (a, b) = (prior.pi0(), prior.pi1());
    let d = a * l0 + b * l1;
    let p = b * l1 / d;
    let dp0 = -a * b * l1 / (d * d);
    let dp1 = a * b * l0 / (d * d);
    let var = dp0 * dp0 * l0 * (1.0 - l0) / n as f64 + dp1 * dp1 * l1 * (1.0 - l1) / n as f64;
    (p, var.sqrt())
}

#[test]
fn leaf_posteriors_match_monte_carlo() {
    let e = experiment();
    let n = 1_000_000;
    let seeds = SeedTree::new(7);
    let run = |rep: u64| {
        let f0 = e.automation_tree.leaf_frequencies_mc(e.schema(), Hypothesis::H0, n, &mut seeds.stream(StreamKind::Misc, rep, 0)).unwrap();
        let f1 = e.automation_tree.leaf_frequencies_mc(e.schema(), Hypothesis::H1, n, &mut seeds.stream(StreamKind::Misc, rep, 1)).unwrap();
        (f0, f1)
    };
    let (a0, a1) = run(0);
    let (b0, b1) = run(1);
    for (leaf, [l0, l1]) in &e.leaf_likelihoods {
        let se = |p: f64| (p * (1.0 - p) / n as f64).sqrt();
        assert!((a0[leaf] - l0).abs() < 3.0 * se(*l0), "{leaf} H0: {} vs {l0}", a0[leaf]);
        assert!((a1[leaf] - l1).abs() < 3.0 * se(*l1), "{leaf} H1: {} vs {l1}", a1[leaf]);

        let (pa, sa) = posterior_with_se(e.config.prior, a0[leaf], a1[leaf], n);
        let (pb, sb) = posterior_with_se(e.config.prior, b0[leaf], b1[leaf], n);
        let exact = e.leaf_posteriors[leaf].value();
        assert!((pa - exact).abs() < 3.0 * sa, "{leaf}: {pa} vs {exact}");
        assert!((pa - pb).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{leaf}: {pa} vs {pb}");
    }
}

#[test]
fn reference_leaf_posteriors() {
    let e = experiment();
    let expected = [("a0", 0.01845), ("a1", 0.3805), ("a2", 0.0606), ("a3", 0.5753), ("a4", 0.4212), ("a5", 0.8966)];
    for (leaf, p) in expected {
        assert!((e.leaf_posteriors[leaf].value() - p).abs() < 1e-4, "{leaf}: {:?}", e.leaf_posteriors[leaf]);
    }
}

#[test]
fn experiment2_is_reproducible_and_consistent() {
    let e = experiment();
    let perf = PerfTable::new(vec![6, 9, 12, 15], vec![0.87, 0.86, 0.74, 0.66], vec![0.05, 0.05, 0.16, 0.24]).unwrap();
    let a = build_experiment2(&e, &perf, 2024).unwrap();
    let b = build_experiment2(&e, &perf, 2024).unwrap();
    assert_eq!(a.to_json(), b.to_json());

    let scored: Vec<_> = a.scored_rounds().collect();
    assert_eq!(scored.len(), 24);
    assert_eq!(scored.iter().filter(|r| r.policy == RoundPolicy::Oa).count(), 12);
    let w_ba = a.ba_load.unwrap();
    for r in &scored {
        if r.policy == RoundPolicy::Ba {
            assert_eq!(r.load(), w_ba);
        }
        for &id in r.task_ids.iter().chain(r.auto_decisions.keys()) {
            let t = a.task(id).unwrap();
            // Stored fields are reproduced by re-classification.
            assert_eq!(e.automation_tree.classify(&t.attributes).unwrap().leaf, t.auto_leaf);
            assert_eq!(e.human_tree().classify(&t.attributes).unwrap().depth, t.human_tree_depth);
        }
        // Unreferred tasks get the automation's Bayes decision.
        for (&id, &d) in &r.auto_decisions {
            assert_eq!(d, refereval_core::automation_decision(a.task(id).unwrap().auto_posterior, &a.costs));
        }
    }
}
