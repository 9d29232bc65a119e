//! Binary decision trees over contact attributes.
//!
//! Each internal node tests one attribute (membership in a category set, or
//! a strict threshold comparison) and has a `yes` and a `no` child. Leaves
//! carry a label. Because attributes are independent given the state and
//! every test is axis-aligned, the probability of reaching a leaf is a
//! product of per-attribute region probabilities, which [`DecisionTree::leaf_likelihoods`]
//! computes exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use refereval_core::{Hypothesis, Rates};
use serde::{Deserialize, Serialize};

use crate::error::{MicroworldError, Result};

/// Per leaf: the region of each tested attribute, and the path depth.
pub type LeafRegions = BTreeMap<String, (BTreeMap<String, Region>, usize)>;
use crate::schema::{AttributeSchema, Attributes, Region, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Test {
    In(BTreeSet<String>),
    GreaterThan(f64),
    LessThan(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub attribute: String,
    pub test: Test,
    pub yes: String,
    pub no: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub id: String,
    pub label: Hypothesis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRepr {
    id: String,
    attribute: String,
    #[serde(default, rename = "in", skip_serializing_if = "Option::is_none")]
    in_set: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    greater_than: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    less_than: Option<f64>,
    yes: String,
    no: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeRepr {
    pub root: String,
    nodes: Vec<NodeRepr>,
    pub leaves: Vec<Leaf>,
}

/// Result of running a tree on one contact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub label: Hypothesis,
    pub leaf: String,
    /// Number of tests on the path.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Node(usize),
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct Compiled {
    test: Test,
    attribute: String,
    yes: Slot,
    no: Slot,
}

/// A validated decision tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct DecisionTree {
    root_id: String,
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
    root: Slot,
    compiled: Vec<Compiled>,
}

impl TryFrom<TreeRepr> for DecisionTree {
    type Error = MicroworldError;
    fn try_from(r: TreeRepr) -> Result<Self> {
        let nodes = r
            .nodes
            .into_iter()
            .map(|n| {
                let test = match (n.in_set, n.greater_than, n.less_than) {
                    (Some(s), None, None) => Test::In(s.into_iter().collect()),
                    (None, Some(t), None) => Test::GreaterThan(t),
                    (None, None, Some(t)) => Test::LessThan(t),
                    _ => return Err(MicroworldError::InvalidTree(format!("node `{}` needs exactly one of in, greater_than, less_than", n.id))),
                };
                Ok(Node { id: n.id, attribute: n.attribute, test, yes: n.yes, no: n.no })
            })
            .collect::<Result<Vec<_>>>()?;
        DecisionTree::new(r.root, nodes, r.leaves)
    }
}

impl From<DecisionTree> for TreeRepr {
    fn from(t: DecisionTree) -> Self {
        TreeRepr {
            root: t.root_id,
            nodes: t
                .nodes
                .into_iter()
                .map(|n| {
                    let (in_set, greater_than, less_than) = match n.test {
                        Test::In(s) => (Some(s.into_iter().collect()), None, None),
                        Test::GreaterThan(x) => (None, Some(x), None),
                        Test::LessThan(x) => (None, None, Some(x)),
                    };
                    NodeRepr { id: n.id, attribute: n.attribute, in_set, greater_than, less_than, yes: n.yes, no: n.no }
                })
                .collect(),
            leaves: t.leaves,
        }
    }
}

impl DecisionTree {
    /// Checks that ids are unique, every child exists, every node and leaf
    /// is reachable from `root` exactly once.
    pub fn new(root: String, nodes: Vec<Node>, leaves: Vec<Leaf>) -> Result<Self> {
        let invalid = |m: String| Err(MicroworldError::InvalidTree(m));
        let mut slots: HashMap<&str, Slot> = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if slots.insert(&n.id, Slot::Node(i)).is_some() {
                return invalid(format!("duplicate id `{}`", n.id));
            }
        }
        for (i, l) in leaves.iter().enumerate() {
            if slots.insert(&l.id, Slot::Leaf(i)).is_some() {
                return invalid(format!("duplicate id `{}`", l.id));
            }
        }
        let lookup = |id: &str| slots.get(id).copied().ok_or_else(|| MicroworldError::InvalidTree(format!("unknown child `{id}`")));
        let root_slot = lookup(&root)?;
        let compiled = nodes
            .iter()
            .map(|n| Ok(Compiled { test: n.test.clone(), attribute: n.attribute.clone(), yes: lookup(&n.yes)?, no: lookup(&n.no)? }))
            .collect::<Result<Vec<_>>>()?;

        let mut seen_nodes = vec![false; nodes.len()];
        let mut seen_leaves = vec![false; leaves.len()];
        let mut stack = vec![root_slot];
        while let Some(s) = stack.pop() {
            let seen = match s {
                Slot::Node(i) => &mut seen_nodes[i],
                Slot::Leaf(i) => &mut seen_leaves[i],
            };
            if *seen {
                return invalid("a node is reachable along two paths".into());
            }
            *seen = true;
            if let Slot::Node(i) = s {
                stack.push(compiled[i].no);
                stack.push(compiled[i].yes);
            }
        }
        if let Some(i) = seen_nodes.iter().position(|s| !s) {
            return invalid(format!("node `{}` is unreachable", nodes[i].id));
        }
        if let Some(i) = seen_leaves.iter().position(|s| !s) {
            return invalid(format!("leaf `{}` is unreachable", leaves[i].id));
        }
        Ok(DecisionTree { root_id: root, nodes, leaves, root: root_slot, compiled })
    }

    /// A tree that always answers `label`.
    pub fn constant(label: Hypothesis) -> Self {
        DecisionTree::new("leaf".into(), vec![], vec![Leaf { id: "leaf".into(), label }]).expect("single leaf is valid")
    }

    pub fn root(&self) -> &str {
        &self.root_id
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn leaf(&self, id: &str) -> Option<&Leaf> {
        self.leaves.iter().find(|l| l.id == id)
    }

    /// Checks every test against the schema: the attribute exists, set tests
    /// name real categories of a categorical attribute, thresholds apply to
    /// continuous ones.
    pub fn check_against(&self, schema: &AttributeSchema) -> Result<()> {
        for n in &self.nodes {
            let attr = schema.get(&n.attribute).ok_or_else(|| MicroworldError::InvalidTree(format!("node `{}` tests unknown attribute `{}`", n.id, n.attribute)))?;
            match (&n.test, attr.categories()) {
                (Test::In(values), Some(cats)) => {
                    if let Some(v) = values.iter().find(|v| !cats.contains(v)) {
                        return Err(MicroworldError::InvalidTree(format!("node `{}`: `{v}` is not a category of `{}`", n.id, n.attribute)));
                    }
                }
                (Test::GreaterThan(t) | Test::LessThan(t), None) if t.is_finite() => {}
                _ => return Err(MicroworldError::InvalidTree(format!("node `{}`: test does not fit attribute `{}`", n.id, n.attribute))),
            }
        }
        Ok(())
    }

    pub fn classify(&self, attributes: &Attributes) -> Result<Classification> {
        let mut slot = self.root;
        let mut depth = 0;
        loop {
            match slot {
                Slot::Leaf(i) => {
                    let l = &self.leaves[i];
                    return Ok(Classification { label: l.label, leaf: l.id.clone(), depth });
                }
                Slot::Node(i) => {
                    let c = &self.compiled[i];
                    let v = attributes.get(&c.attribute).ok_or_else(|| MicroworldError::MissingAttribute(c.attribute.clone()))?;
                    let pass = match (&c.test, v) {
                        (Test::In(set), Value::Category(x)) => set.contains(x),
                        (Test::GreaterThan(t), Value::Number(x)) => x > t,
                        (Test::LessThan(t), Value::Number(x)) => x < t,
                        (Test::In(_), _) => return Err(MicroworldError::AttributeType { attribute: c.attribute.clone(), expected: "a category" }),
                        _ => return Err(MicroworldError::AttributeType { attribute: c.attribute.clone(), expected: "a number" }),
                    };
                    slot = if pass { c.yes } else { c.no };
                    depth += 1;
                }
            }
        }
    }

    /// For each leaf, the per-attribute region a contact must lie in to
    /// reach it, and the path depth.
    pub fn leaf_regions(&self, schema: &AttributeSchema) -> Result<LeafRegions> {
        self.check_against(schema)?;
        let mut out = BTreeMap::new();
        let mut stack = vec![(self.root, BTreeMap::<String, Region>::new(), 0usize)];
        while let Some((slot, regions, depth)) = stack.pop() {
            match slot {
                Slot::Leaf(i) => {
                    out.insert(self.leaves[i].id.clone(), (regions, depth));
                }
                Slot::Node(i) => {
                    let c = &self.compiled[i];
                    let attr = schema.get(&c.attribute).expect("checked above");
                    let current = regions.get(&c.attribute).cloned().unwrap_or_else(|| attr.full_region());
                    let (yes, no) = split(&current, &c.test);
                    for (child, region) in [(c.yes, yes), (c.no, no)] {
                        let mut r = regions.clone();
                        r.insert(c.attribute.clone(), region);
                        stack.push((child, r, depth + 1));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exact `[P(leaf | H0), P(leaf | H1)]` for every leaf.
    pub fn leaf_likelihoods(&self, schema: &AttributeSchema) -> Result<BTreeMap<String, [f64; 2]>> {
        Ok(self
            .leaf_regions(schema)?
            .into_iter()
            .map(|(leaf, (regions, _))| {
                let p = |h| regions.iter().map(|(a, r)| schema.get(a).expect("checked").probability(r, h)).product::<f64>();
                (leaf, [p(Hypothesis::H0), p(Hypothesis::H1)])
            })
            .collect())
    }

    /// Exact operating point of a user who follows this tree without error.
    pub fn rates(&self, schema: &AttributeSchema) -> Result<Rates> {
        let lik = self.leaf_likelihoods(schema)?;
        let (mut tpr, mut fpr) = (0.0, 0.0);
        for l in &self.leaves {
            if l.label.is_positive() {
                fpr += lik[&l.id][0];
                tpr += lik[&l.id][1];
            }
        }
        Ok(Rates::new(tpr.clamp(0.0, 1.0), fpr.clamp(0.0, 1.0))?)
    }

    /// Leaf visit frequencies from `n` contacts sampled in state `state`.
    pub fn leaf_frequencies_mc<R: Rng + ?Sized>(&self, schema: &AttributeSchema, state: Hypothesis, n: usize, rng: &mut R) -> Result<BTreeMap<String, f64>> {
        let mut counts: BTreeMap<String, usize> = self.leaves.iter().map(|l| (l.id.clone(), 0)).collect();
        for _ in 0..n {
            *counts.get_mut(&self.classify(&schema.sample(state, rng))?.leaf).expect("leaf of this tree") += 1;
        }
        Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n as f64)).collect())
    }

    /// Replaces the subtree under each listed node with a leaf of the given
    /// label. Every path must end in a collapsed node.
    pub fn collapse(&self, merges: &[Leaf]) -> Result<DecisionTree> {
        let targets: BTreeMap<&str, Hypothesis> = merges.iter().map(|m| (m.id.as_str(), m.label)).collect();
        let mut nodes = Vec::new();
        let mut leaves = Vec::new();
        let mut stack = vec![self.root_id.clone()];
        while let Some(id) = stack.pop() {
            if let Some(&label) = targets.get(id.as_str()) {
                leaves.push(Leaf { id, label });
                continue;
            }
            let n = self.nodes.iter().find(|n| n.id == id).ok_or_else(|| MicroworldError::InvalidTree(format!("path reaches leaf `{id}` without passing a merged node")))?;
            stack.push(n.no.clone());
            stack.push(n.yes.clone());
            nodes.push(n.clone());
        }
        if leaves.len() != targets.len() {
            return Err(MicroworldError::InvalidTree("a merged node is not on the frontier of the remaining tree".into()));
        }
        DecisionTree::new(self.root_id.clone(), nodes, leaves)
    }
}

fn split(region: &Region, test: &Test) -> (Region, Region) {
    match (region, test) {
        (Region::Categories(allowed), Test::In(set)) => (
            Region::Categories(allowed.intersection(set).cloned().collect()),
            Region::Categories(allowed.difference(set).cloned().collect()),
        ),
        (Region::Interval { lo, hi }, Test::GreaterThan(t)) => (Region::Interval { lo: lo.max(*t), hi: *hi }, Region::Interval { lo: *lo, hi: hi.min(*t) }),
        (Region::Interval { lo, hi }, Test::LessThan(t)) => (Region::Interval { lo: *lo, hi: hi.min(*t) }, Region::Interval { lo: lo.max(*t), hi: *hi }),
        _ => unreachable!("tests are checked against the schema"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Attribute, AttributeLaw, NormalLaw};
    use refereval_core::rng::{SeedTree, StreamKind};

    fn schema() -> AttributeSchema {
        AttributeSchema::new(vec![
            Attribute {
                name: "color".into(),
                law: AttributeLaw::Categorical { categories: vec!["red".into(), "green".into(), "blue".into()], h0: vec![0.2, 0.5, 0.3], h1: vec![0.6, 0.1, 0.3] },
            },
            Attribute { name: "speed".into(), law: AttributeLaw::Continuous { h0: NormalLaw { mean: 0.0, sd: 1.0 }, h1: NormalLaw { mean: 1.0, sd: 1.0 }, min: None, unit: None } },
        ])
        .unwrap()
    }

    fn tree() -> DecisionTree {
        let toml = r#"
            root = "n0"
            nodes = [
              { id = "n0", attribute = "color", in = ["red"], yes = "hot", no = "n1" },
              { id = "n1", attribute = "speed", greater_than = 0.5, yes = "n2", no = "calm" },
              { id = "n2", attribute = "color", in = ["blue"], yes = "fast_blue", no = "fast_green" },
            ]
            leaves = [
              { id = "hot", label = "H1" },
              { id = "calm", label = "H0" },
              { id = "fast_blue", label = "H1" },
              { id = "fast_green", label = "H0" },
            ]
        "#;
        toml::from_str(toml).unwrap()
    }

    fn attrs(color: &str, speed: f64) -> Attributes {
        [("color".to_string(), Value::Category(color.into())), ("speed".to_string(), Value::Number(speed))].into_iter().collect()
    }

    #[test]
    fn constant_tree() {
        let t = DecisionTree::constant(Hypothesis::H1);
        let c = t.classify(&Attributes::new()).unwrap();
        assert_eq!((c.label, c.depth), (Hypothesis::H1, 0));
    }

    #[test]
    fn classify_paths() {
        let t = tree();
        assert_eq!(t.classify(&attrs("red", -3.0)).unwrap(), Classification { label: Hypothesis::H1, leaf: "hot".into(), depth: 1 });
        assert_eq!(t.classify(&attrs("green", 0.0)).unwrap().leaf, "calm");
        assert_eq!(t.classify(&attrs("blue", 0.7)).unwrap(), Classification { label: Hypothesis::H1, leaf: "fast_blue".into(), depth: 3 });
        // Thresholds are strict.
        assert_eq!(t.classify(&attrs("blue", 0.5)).unwrap().leaf, "calm");
    }

    #[test]
    fn missing_attribute_is_named() {
        let t = tree();
        let only_color: Attributes = [("color".to_string(), Value::Category("green".into()))].into_iter().collect();
        let err = t.classify(&only_color).unwrap_err();
        assert!(matches!(&err, MicroworldError::MissingAttribute(a) if a == "speed"));
        assert!(err.to_string().contains("speed"));
        let wrong: Attributes = [("color".to_string(), Value::Number(1.0))].into_iter().collect();
        assert!(matches!(t.classify(&wrong), Err(MicroworldError::AttributeType { .. })));
    }

    #[test]
    fn exact_likelihoods_by_hand() {
        let t = tree();
        let lik = t.leaf_likelihoods(&schema()).unwrap();
        let q = |x: f64| refereval_core::normal::upper_tail(x);
        assert!((lik["hot"][1] - 0.6).abs() < 1e-15);
        assert!((lik["fast_blue"][0] - 0.3 * q(0.5)).abs() < 1e-15);
        assert!((lik["fast_green"][1] - 0.1 * q(-0.5)).abs() < 1e-15);
        assert!((lik["calm"][0] - 0.8 * (1.0 - q(0.5))).abs() < 1e-15);
        for h in 0..2 {
            assert!((lik.values().map(|v| v[h]).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let r = t.rates(&schema()).unwrap();
        assert!((r.tpr() - (0.6 + 0.3 * q(-0.5))).abs() < 1e-15);
    }

    #[test]
    fn exact_matches_monte_carlo() {
        let t = tree();
        let s = schema();
        let lik = t.leaf_likelihoods(&s).unwrap();
        let n = 200_000;
        for (hi, h) in [Hypothesis::H0, Hypothesis::H1].into_iter().enumerate() {
            let freq = t.leaf_frequencies_mc(&s, h, n, &mut SeedTree::new(8).stream(StreamKind::Misc, hi as u64, 0)).unwrap();
            for (leaf, f) in freq {
                let p = lik[&leaf][hi];
                assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{leaf}: {f} vs {p}");
            }
        }
    }

    #[test]
    fn validation() {
        let bad = r#"
            root = "n0"
            nodes = [{ id = "n0", attribute = "color", in = ["red"], yes = "a", no = "a" }]
            leaves = [{ id = "a", label = "H1" }]
        "#;
        assert!(toml::from_str::<DecisionTree>(bad).is_err());
        let orphan = r#"
            root = "a"
            nodes = []
            leaves = [{ id = "a", label = "H1" }, { id = "b", label = "H0" }]
        "#;
        assert!(toml::from_str::<DecisionTree>(orphan).is_err());
        let two_tests = r#"
            root = "n0"
            nodes = [{ id = "n0", attribute = "speed", greater_than = 1.0, less_than = 2.0, yes = "a", no = "b" }]
            leaves = [{ id = "a", label = "H1" }, { id = "b", label = "H0" }]
        "#;
        assert!(toml::from_str::<DecisionTree>(two_tests).is_err());
        let typo = r#"
            root = "n0"
            nodes = [{ id = "n0", attribute = "color", in = ["purple"], yes = "a", no = "b" }]
            leaves = [{ id = "a", label = "H1" }, { id = "b", label = "H0" }]
        "#;
        let t: DecisionTree = toml::from_str(typo).unwrap();
        assert!(t.check_against(&schema()).is_err());
    }

    #[test]
    fn collapse_keeps_top_levels() {
        let t = tree();
        let merged = t.collapse(&[Leaf { id: "hot".into(), label: Hypothesis::H1 }, Leaf { id: "n1".into(), label: Hypothesis::H0 }]).unwrap();
        assert_eq!(merged.nodes().len(), 1);
        assert_eq!(merged.classify(&attrs("blue", 9.0)).unwrap(), Classification { label: Hypothesis::H0, leaf: "n1".into(), depth: 1 });
        assert!(t.collapse(&[Leaf { id: "n1".into(), label: Hypothesis::H0 }]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let t = tree();
        let back: DecisionTree = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
