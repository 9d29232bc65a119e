//! Scenario configuration.
//!
//! A scenario is a TOML document. Every numeric model parameter is either a
//! fixed number or a `{ min, max }` uniform range sampled once per instance.
//! [`ScenarioConfig::default`] is the reference study.
//!
//! ```toml
//! k = 20
//!
//! [prior]
//! pi0 = 0.8
//!
//! [automation]
//! separation = 3.0
//! sigma = { min = 1.5, max = 2.0 }
//!
//! [human_law]
//! case = "shrinking_mean"
//! mu0 = 3.0
//! sigma0 = { min = 1.0, max = 1.5 }
//!
//! [costs]
//! c_fp = { min = 8.0, max = 12.0 }
//! c_fn = { min = 8.0, max = 12.0 }
//! c_tp = { min = 0.0, max = 2.0 }
//! c_tn = { min = 0.0, max = 2.0 }
//! c_r = { min = 0.0, max = 0.5 }
//!
//! [study]
//! n_instances = 25
//! n_batches = 2000
//! sa_batches = 2000
//! seed = 20240601
//! policies = ["oa", "ba", "sa"]
//! ```

use std::fmt;
use std::path::Path;

use rand::Rng;
use refereval_core::models::LawCase;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// A fixed value or a closed uniform range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
}

impl Param {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Param::Fixed(v) => (v, v),
            Param::Uniform { min, max } => (min, max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Param::Fixed(v) => v,
            Param::Uniform { min, max } if min == max => min,
            Param::Uniform { min, max } => rng.random_range(min..=max),
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(SimError::Config(format!("{name}: bad range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Fixed(v) => write!(f, "{v}"),
            Param::Uniform { min, max } => write!(f, "U({min}, {max})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Oa,
    Ba,
    Sa,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Oa => "oa",
            PolicyKind::Ba => "ba",
            PolicyKind::Sa => "sa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oa" => Some(PolicyKind::Oa),
            "ba" => Some(PolicyKind::Ba),
            "sa" => Some(PolicyKind::Sa),
            _ => None,
        }
    }

    /// Small fixed index used to separate per-policy random streams.
    pub(crate) fn stream_index(self) -> u64 {
        match self {
            PolicyKind::Oa => 0,
            PolicyKind::Ba => 1,
            PolicyKind::Sa => 2,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// Probability of the benign state `H0`.
    pub pi0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutomationSection {
    /// Mean of the automation's observation under `H1`; the `H0` mean is 0.
    pub separation: f64,
    pub sigma: Param,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanLawSection {
    pub case: LawCase,
    pub mu0: f64,
    pub sigma0: Param,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub c_tp: Param,
    pub c_fp: Param,
    pub c_tn: Param,
    pub c_fn: Param,
    pub c_r: Param,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub n_instances: usize,
    pub n_batches: usize,
    /// Batches used to choose the static load; drawn from separate streams.
    pub sa_batches: usize,
    pub seed: u64,
    pub policies: Vec<PolicyKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub k: usize,
    /// Feasible loads; all of `0..=k` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_set: Option<Vec<usize>>,
    pub prior: PriorSection,
    pub automation: AutomationSection,
    pub human_law: HumanLawSection,
    pub costs: CostSection,
    pub study: StudySection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let u = |min, max| Param::Uniform { min, max };
        ScenarioConfig {
            k: 20,
            load_set: None,
            prior: PriorSection { pi0: 0.8 },
            automation: AutomationSection { separation: 3.0, sigma: u(1.5, 2.0) },
            human_law: HumanLawSection { case: LawCase::ShrinkingMean, mu0: 3.0, sigma0: u(1.0, 1.5) },
            costs: CostSection { c_tp: u(0.0, 2.0), c_fp: u(8.0, 12.0), c_tn: u(0.0, 2.0), c_fn: u(8.0, 12.0), c_r: u(0.0, 0.5) },
            study: StudySection {
                n_instances: 25,
                n_batches: 2000,
                sa_batches: 2000,
                seed: 20240601,
                policies: vec![PolicyKind::Oa, PolicyKind::Ba, PolicyKind::Sa],
            },
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io { path: path.to_owned(), source })?;
        ScenarioConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(SimError::Config("k must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.prior.pi0) {
            return Err(SimError::Config(format!("pi0 = {} is not a probability", self.prior.pi0)));
        }
        if let Some(loads) = &self.load_set {
            refereval_core::LoadSet::new(loads.iter().copied(), self.k)?;
        }
        self.automation.sigma.check("automation.sigma")?;
        self.human_law.sigma0.check("human_law.sigma0")?;
        let c = &self.costs;
        for (name, p) in [("c_tp", c.c_tp), ("c_fp", c.c_fp), ("c_tn", c.c_tn), ("c_fn", c.c_fn), ("c_r", c.c_r)] {
            p.check(name)?;
            if p.bounds().0 < 0.0 {
                return Err(SimError::Config(format!("{name} may be negative")));
            }
        }
        if self.automation.sigma.bounds().0 <= 0.0 || self.human_law.sigma0.bounds().0 <= 0.0 {
            return Err(SimError::Config("standard deviations must be positive".into()));
        }
        // Every draw must give a wrong decision a higher cost than the right one.
        if c.c_fp.bounds().0 <= c.c_tn.bounds().1 || c.c_fn.bounds().0 <= c.c_tp.bounds().1 {
            return Err(SimError::Config("cost ranges allow c_fp <= c_tn or c_fn <= c_tp".into()));
        }
        if self.study.policies.is_empty() {
            return Err(SimError::Config("no policies selected".into()));
        }
        let mut seen = self.study.policies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.study.policies.len() {
            return Err(SimError::Config("a policy is listed twice".into()));
        }
        if self.study.policies.contains(&PolicyKind::Sa) && self.study.sa_batches == 0 {
            return Err(SimError::Config("sa_batches must be positive when sa is selected".into()));
        }
        Ok(())
    }

    pub fn load_set(&self) -> refereval_core::LoadSet {
        match &self.load_set {
            Some(l) => refereval_core::LoadSet::new(l.iter().copied(), self.k).expect("validated"),
            None => refereval_core::LoadSet::full(self.k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_example_parses_to_default() {
        let doc = include_str!("config.rs");
        let start = doc.find("//! ```toml").unwrap();
        let body: String = doc[start..]
            .lines()
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(ScenarioConfig::from_toml_str(&body).unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig { load_set: Some(vec![0, 5, 10]), ..ScenarioConfig::default() };
        cfg.costs.c_r = Param::Fixed(0.25);
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let base = ScenarioConfig::default();
        let mut c = base.clone();
        c.costs.c_tn = Param::Uniform { min: 0.0, max: 9.0 };
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.load_set = Some(vec![30]);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.study.policies = vec![PolicyKind::Oa, PolicyKind::Oa];
        assert!(c.validate().is_err());
        let mut c = base;
        c.automation.sigma = Param::Uniform { min: 2.0, max: 1.0 };
        assert!(c.validate().is_err());
        assert!(ScenarioConfig::from_toml_str("k = 3\nunknown = 1").is_err());
    }
}
