//! Contacts shown to participants.

use rand::Rng;
use refereval_core::{Hypothesis, Posterior, TaskId};
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::error::{MicroworldError, Result};
use crate::schema::Attributes;

/// Draw limit for one task.
pub const ATTEMPT_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroworldTask {
    pub task_id: TaskId,
    pub attributes: Attributes,
    pub true_state: Hypothesis,
    /// Number of tests on the human-tree path of this contact.
    pub human_tree_depth: usize,
    pub auto_leaf: String,
    pub auto_posterior: Posterior,
}

/// Draws a contact, optionally conditioned on its automation leaf and its
/// human-tree depth.
///
/// The state is drawn from the prior and the attributes from the state's
/// laws; draws that miss the target are rejected. An accepted task therefore
/// has the state law conditional on the target, which for a leaf target is
/// the leaf posterior.
pub fn generate_task<R: Rng + ?Sized>(
    experiment: &Experiment,
    task_id: TaskId,
    target_leaf: Option<&str>,
    target_depth: Option<usize>,
    rng: &mut R,
) -> Result<MicroworldTask> {
    if let Some(leaf) = target_leaf {
        if experiment.automation_tree.leaf(leaf).is_none() {
            return Err(MicroworldError::UnknownLeaf(leaf.to_string()));
        }
    }
    let pi1 = experiment.config.prior.pi1();
    for _ in 0..ATTEMPT_BUDGET {
        let state = Hypothesis::from_positive(rng.random_bool(pi1));
        let attributes = experiment.schema().sample(state, rng);
        let auto = experiment.automation_tree.classify(&attributes)?;
        if target_leaf.is_some_and(|l| l != auto.leaf) {
            continue;
        }
        let human = experiment.human_tree().classify(&attributes)?;
        if target_depth.is_some_and(|d| d != human.depth) {
            continue;
        }
        return Ok(MicroworldTask {
            task_id,
            attributes,
            true_state: state,
            human_tree_depth: human.depth,
            auto_posterior: experiment.leaf_posteriors[&auto.leaf],
            auto_leaf: auto.leaf,
        });
    }
    Err(MicroworldError::UnreachableLeaf { leaf: target_leaf.unwrap_or("any").to_string(), depth: target_depth, attempts: ATTEMPT_BUDGET })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use refereval_core::rng::{SeedTree, StreamKind};

    #[test]
    fn targets_are_honoured() {
        let e = ExperimentConfig::reference().compile().unwrap();
        let seeds = SeedTree::new(4);
        for (i, leaf) in e.automation_tree.leaves().iter().enumerate() {
            for j in 0..20 {
                let t = generate_task(&e, 0, Some(&leaf.id), None, &mut seeds.stream(StreamKind::Task, i as u64, j)).unwrap();
                assert_eq!(e.automation_tree.classify(&t.attributes).unwrap().leaf, leaf.id);
                assert_eq!(e.human_tree().classify(&t.attributes).unwrap().depth, t.human_tree_depth);
                assert_eq!(t.auto_posterior, e.leaf_posteriors[&leaf.id]);
            }
        }
        let t = generate_task(&e, 3, Some("a0"), Some(5), &mut seeds.stream(StreamKind::Task, 9, 0)).unwrap();
        assert_eq!((t.task_id, t.human_tree_depth), (3, 5));
    }

    #[test]
    fn deterministic_given_stream() {
        let e = ExperimentConfig::reference().compile().unwrap();
        let a = generate_task(&e, 1, Some("a4"), None, &mut SeedTree::new(1).stream(StreamKind::Task, 0, 0)).unwrap();
        let b = generate_task(&e, 1, Some("a4"), None, &mut SeedTree::new(1).stream(StreamKind::Task, 0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_targets_fail() {
        let e = ExperimentConfig::reference().compile().unwrap();
        let mut rng = SeedTree::new(1).stream(StreamKind::Task, 0, 1);
        assert!(matches!(generate_task(&e, 0, Some("nowhere"), None, &mut rng), Err(MicroworldError::UnknownLeaf(_))));
        // a3 only has depth-5 human leaves.
        let err = generate_task(&e, 0, Some("a3"), Some(4), &mut rng).unwrap_err();
        assert!(matches!(err, MicroworldError::UnreachableLeaf { attempts: ATTEMPT_BUDGET, .. }));
    }

    #[test]
    fn leaf_conditional_state_law() {
        let e = ExperimentConfig::reference().compile().unwrap();
        let n = 4000;
        let seeds = SeedTree::new(12);
        let hostile = (0..n).filter(|&j| generate_task(&e, 0, Some("a4"), None, &mut seeds.stream(StreamKind::Task, 0, j)).unwrap().true_state.is_positive()).count();
        let p = e.leaf_posteriors["a4"].value();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hostile as f64 / n as f64 - p).abs() < 4.0 * se);
    }
}
