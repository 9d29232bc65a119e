//! Contact attributes and their class-conditional laws.
//!
//! Attributes are independent given the true state. Categorical attributes
//! have a probability vector per state; continuous ones a normal law per
//! state, optionally truncated below (speeds, altitudes and ranges are never
//! negative).

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use refereval_core::normal::interval_probability;
use refereval_core::Hypothesis;
use serde::{Deserialize, Serialize};

use crate::error::{MicroworldError, Result};

/// Value of one attribute on one contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

pub type Attributes = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalLaw {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeLaw {
    Categorical {
        categories: Vec<String>,
        h0: Vec<f64>,
        h1: Vec<f64>,
    },
    Continuous {
        h0: NormalLaw,
        h1: NormalLaw,
        /// Lower truncation point shared by both states.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub law: AttributeLaw,
}

/// A set of values of one attribute: allowed categories, or an open interval.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Categories(BTreeSet<String>),
    Interval { lo: f64, hi: f64 },
}

impl Attribute {
    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(MicroworldError::InvalidSchema(format!("{}: {msg}", self.name)));
        match &self.law {
            AttributeLaw::Categorical { categories, h0, h1 } => {
                if categories.is_empty() {
                    return bad("no categories".into());
                }
                if categories.iter().collect::<BTreeSet<_>>().len() != categories.len() {
                    return bad("repeated category".into());
                }
                for (state, p) in [("h0", h0), ("h1", h1)] {
                    if p.len() != categories.len() {
                        return bad(format!("{state} has {} probabilities for {} categories", p.len(), categories.len()));
                    }
                    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return bad(format!("{state} is not a probability vector"));
                    }
                }
            }
            AttributeLaw::Continuous { h0, h1, min, .. } => {
                for (state, law) in [("h0", h0), ("h1", h1)] {
                    if !(law.sd > 0.0) || !law.mean.is_finite() || !law.sd.is_finite() {
                        return bad(format!("{state} needs a finite mean and positive sd"));
                    }
                    if let Some(m) = min {
                        if interval_probability(law.mean, law.sd, *m, f64::INFINITY) < 1e-6 {
                            return bad(format!("{state} puts almost no mass above {m}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.law, AttributeLaw::Categorical { .. })
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.law {
            AttributeLaw::Categorical { categories, .. } => Some(categories),
            AttributeLaw::Continuous { .. } => None,
        }
    }

    /// Whole value space of this attribute.
    pub fn full_region(&self) -> Region {
        match &self.law {
            AttributeLaw::Categorical { categories, .. } => Region::Categories(categories.iter().cloned().collect()),
            AttributeLaw::Continuous { .. } => Region::Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
        }
    }

    /// `P(value in region | state)`.
    pub fn probability(&self, region: &Region, state: Hypothesis) -> f64 {
        match (&self.law, region) {
            (AttributeLaw::Categorical { categories, h0, h1 }, Region::Categories(allowed)) => {
                let p = if state.is_positive() { h1 } else { h0 };
                categories.iter().zip(p).filter(|(c, _)| allowed.contains(*c)).map(|(_, &q)| q).sum()
            }
            (AttributeLaw::Continuous { h0, h1, min, .. }, Region::Interval { lo, hi }) => {
                let law = if state.is_positive() { h1 } else { h0 };
                let floor = min.unwrap_or(f64::NEG_INFINITY);
                let mass = interval_probability(law.mean, law.sd, floor, f64::INFINITY);
                interval_probability(law.mean, law.sd, lo.max(floor), *hi) / mass
            }
            _ => panic!("region kind does not match attribute `{}`", self.name),
        }
    }
}

/// The attributes shown for every contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
    samplers: Vec<[Option<WeightedIndex<f64>>; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    attributes: Vec<Attribute>,
}

impl TryFrom<SchemaRepr> for AttributeSchema {
    type Error = MicroworldError;
    fn try_from(r: SchemaRepr) -> Result<Self> {
        AttributeSchema::new(r.attributes)
    }
}

impl From<AttributeSchema> for SchemaRepr {
    fn from(s: AttributeSchema) -> Self {
        SchemaRepr { attributes: s.attributes }
    }
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.iter().map(|a| &a.name).collect::<BTreeSet<_>>().len() != attributes.len() {
            return Err(MicroworldError::InvalidSchema("attribute names must be unique".into()));
        }
        let mut samplers = Vec::with_capacity(attributes.len());
        for a in &attributes {
            a.check()?;
            samplers.push(match &a.law {
                AttributeLaw::Categorical { h0, h1, .. } => {
                    let w = |p: &Vec<f64>| WeightedIndex::new(p).map_err(|e| MicroworldError::InvalidSchema(format!("{}: {e}", a.name)));
                    [Some(w(h0)?), Some(w(h1)?)]
                }
                AttributeLaw::Continuous { .. } => [None, None],
            });
        }
        Ok(AttributeSchema { attributes, samplers })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn get(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// Draws every attribute of one contact in state `state`.
    pub fn sample<R: Rng + ?Sized>(&self, state: Hypothesis, rng: &mut R) -> Attributes {
        let s = usize::from(state.is_positive());
        self.attributes
            .iter()
            .zip(&self.samplers)
            .map(|(a, samplers)| {
                let v = match &a.law {
                    AttributeLaw::Categorical { categories, .. } => {
                        Value::Category(categories[samplers[s].as_ref().expect("categorical sampler").sample(rng)].clone())
                    }
                    AttributeLaw::Continuous { h0, h1, min, .. } => {
                        let law = if s == 1 { h1 } else { h0 };
                        // Rejection from the untruncated law; validation bounds the loss.
                        loop {
                            let z: f64 = rng.sample(StandardNormal);
                            let x = law.mean + law.sd * z;
                            if min.is_none_or(|m| x >= m) {
                                break Value::Number(x);
                            }
                        }
                    }
                };
                (a.name.clone(), v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use refereval_core::rng::{SeedTree, StreamKind};

    fn schema() -> AttributeSchema {
        AttributeSchema::new(vec![
            Attribute {
                name: "origin".into(),
                law: AttributeLaw::Categorical { categories: vec!["a".into(), "b".into(), "c".into()], h0: vec![0.5, 0.3, 0.2], h1: vec![0.1, 0.1, 0.8] },
            },
            Attribute {
                name: "altitude".into(),
                law: AttributeLaw::Continuous { h0: NormalLaw { mean: 22.0, sd: 9.0 }, h1: NormalLaw { mean: 12.0, sd: 8.0 }, min: Some(0.0), unit: None },
            },
        ])
        .unwrap()
    }

    #[test]
    fn region_probabilities() {
        let s = schema();
        let origin = s.get("origin").unwrap();
        let r = Region::Categories(["a", "c"].iter().map(|x| x.to_string()).collect());
        assert!((origin.probability(&r, Hypothesis::H0) - 0.7).abs() < 1e-15);
        assert!((origin.probability(&origin.full_region(), Hypothesis::H1) - 1.0).abs() < 1e-15);

        let alt = s.get("altitude").unwrap();
        assert!((alt.probability(&alt.full_region(), Hypothesis::H1) - 1.0).abs() < 1e-12);
        // Truncated at zero: (Phi(-1) - Phi(-1.5)) / (1 - Phi(-1.5)).
        let p = alt.probability(&Region::Interval { lo: f64::NEG_INFINITY, hi: 4.0 }, Hypothesis::H1);
        let want = (0.158_655_253_931_457_05 - 0.066_807_201_268_858_07) / (1.0 - 0.066_807_201_268_858_07);
        assert!((p - want).abs() < 1e-12, "{p}");
    }

    #[test]
    fn sampling_matches_laws() {
        let s = schema();
        let mut rng = SeedTree::new(3).stream(StreamKind::Misc, 0, 0);
        let n = 100_000;
        let mut c_count = 0;
        let mut low = 0;
        for _ in 0..n {
            let a = s.sample(Hypothesis::H1, &mut rng);
            if a["origin"] == Value::Category("c".into()) {
                c_count += 1;
            }
            match a["altitude"] {
                Value::Number(x) => {
                    assert!(x >= 0.0);
                    low += usize::from(x < 4.0);
                }
                _ => panic!("altitude must be numeric"),
            }
        }
        let check = |k: usize, p: f64| {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((k as f64 / n as f64 - p).abs() < 4.0 * se, "{k} vs {p}");
        };
        check(c_count, 0.8);
        let alt = s.get("altitude").unwrap();
        check(low, alt.probability(&Region::Interval { lo: f64::NEG_INFINITY, hi: 4.0 }, Hypothesis::H1));
    }

    #[test]
    fn rejects_bad_laws() {
        let cat = |h0: Vec<f64>| Attribute { name: "x".into(), law: AttributeLaw::Categorical { categories: vec!["a".into(), "b".into()], h0, h1: vec![0.5, 0.5] } };
        assert!(AttributeSchema::new(vec![cat(vec![0.5, 0.6])]).is_err());
        assert!(AttributeSchema::new(vec![cat(vec![1.0])]).is_err());
        assert!(AttributeSchema::new(vec![cat(vec![0.5, 0.5]), cat(vec![0.5, 0.5])]).is_err());
        let cont = Attribute { name: "y".into(), law: AttributeLaw::Continuous { h0: NormalLaw { mean: 0.0, sd: 0.0 }, h1: NormalLaw { mean: 1.0, sd: 1.0 }, min: None, unit: None } };
        assert!(AttributeSchema::new(vec![cont]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = schema();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"kind\":\"categorical\""));
        let back: AttributeSchema = serde_json::from_str(&json).unwrap();
        assert_eq!(back.attributes(), s.attributes());
    }
}
