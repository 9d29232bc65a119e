//! Experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;

use refereval_core::{posterior_from_likelihoods, DecisionCosts, LoadSet, Posterior, Prior, Rates};
use serde::{Deserialize, Serialize};

use crate::error::{MicroworldError, Result};
use crate::schema::AttributeSchema;
use crate::tree::{DecisionTree, Leaf};

/// The bundled reference configuration.
pub const REFERENCE_TOML: &str = include_str!("../config/reference.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Rounds at a few fixed loads, used to measure human rates.
    Calibration,
    /// Paired blind and optimal allocation rounds.
    Experiment2,
}

/// The automation tree, given in full or as a set of human-tree nodes to
/// collapse into leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutomationTreeSpec {
    Merge { merge: Vec<Leaf> },
    Tree(DecisionTree),
}

fn default_round_seconds() -> u32 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_round_seconds")]
    pub round_seconds: u32,
    /// Feasible loads for allocation rounds.
    pub load_set: Vec<usize>,
    /// Loads used in calibration rounds.
    pub estimation_loads: Vec<usize>,
    /// How often each estimation load occurs.
    pub calibration_repeats: usize,
    /// Loads of the unscored warm-up rounds.
    pub practice_loads: Vec<usize>,
    /// Number of allocation batches; each yields one blind and one optimal round.
    pub batches: usize,
    pub tasks_per_leaf: usize,
    pub prior: Prior,
    pub costs: DecisionCosts,
    pub schema: AttributeSchema,
    pub human_tree: DecisionTree,
    pub automation_tree: AutomationTreeSpec,
}

impl ExperimentConfig {
    pub fn reference() -> Self {
        ExperimentConfig::from_toml_str(REFERENCE_TOML).expect("bundled configuration is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.compile()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| MicroworldError::Io { path: path.to_owned(), source })?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is representable as TOML")
    }

    /// Batch size of allocation rounds.
    pub fn batch_size(&self) -> usize {
        self.tasks_per_leaf * self.automation_leaf_count()
    }

    fn automation_leaf_count(&self) -> usize {
        match &self.automation_tree {
            AutomationTreeSpec::Merge { merge } => merge.len(),
            AutomationTreeSpec::Tree(t) => t.leaves().len(),
        }
    }

    /// Validates the configuration and derives the quantities every
    /// builder needs.
    pub fn compile(&self) -> Result<Experiment> {
        let bad = |m: String| Err(MicroworldError::Config(m));
        if self.round_seconds == 0 {
            return bad("round_seconds must be positive".into());
        }
        if self.estimation_loads.is_empty() || self.estimation_loads.contains(&0) {
            return bad("estimation_loads must be nonempty and positive".into());
        }
        if self.practice_loads.contains(&0) {
            return bad("practice rounds need at least one task".into());
        }
        if self.tasks_per_leaf == 0 {
            return bad("tasks_per_leaf must be positive".into());
        }
        if !(0.0 < self.prior.pi1() && self.prior.pi1() < 1.0) {
            return bad("prior must put mass on both states".into());
        }
        let load_set = LoadSet::new(self.load_set.iter().copied(), self.batch_size())?;
        self.human_tree.check_against(&self.schema)?;
        let automation_tree = match &self.automation_tree {
            AutomationTreeSpec::Merge { merge } => self.human_tree.collapse(merge)?,
            AutomationTreeSpec::Tree(t) => t.clone(),
        };
        automation_tree.check_against(&self.schema)?;
        let leaf_likelihoods = automation_tree.leaf_likelihoods(&self.schema)?;
        let mut leaf_posteriors = BTreeMap::new();
        for (leaf, [l0, l1]) in &leaf_likelihoods {
            let p = posterior_from_likelihoods(self.prior, *l0, *l1).map_err(|_| MicroworldError::DegenerateLeaf(leaf.clone()))?;
            leaf_posteriors.insert(leaf.clone(), p);
        }
        Ok(Experiment {
            human_rates: self.human_tree.rates(&self.schema)?,
            automation_rates: automation_tree.rates(&self.schema)?,
            config: self.clone(),
            automation_tree,
            load_set,
            leaf_likelihoods,
            leaf_posteriors,
        })
    }
}

/// A validated configuration with its derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub automation_tree: DecisionTree,
    pub load_set: LoadSet,
    /// Exact `[P(leaf | H0), P(leaf | H1)]` per automation leaf.
    pub leaf_likelihoods: BTreeMap<String, [f64; 2]>,
    pub leaf_posteriors: BTreeMap<String, Posterior>,
    /// Operating point of a user who follows the human tree exactly.
    pub human_rates: Rates,
    pub automation_rates: Rates,
}

impl Experiment {
    pub fn schema(&self) -> &AttributeSchema {
        &self.config.schema
    }

    pub fn human_tree(&self) -> &DecisionTree {
        &self.config.human_tree
    }

    /// `P(leaf)` under the prior.
    pub fn leaf_probability(&self, leaf: &str) -> Option<f64> {
        let [l0, l1] = self.leaf_likelihoods.get(leaf)?;
        Some(self.config.prior.pi0() * l0 + self.config.prior.pi1() * l1)
    }
}
