//! Observation models and human performance models.
//!
//! The policies only ever need a human's operating point (TPR, FPR) at a
//! given task load; [`PerfModel`] is that contract. Three sources implement
//! it:
//!
//! * [`AnalyticHuman`]: a Bayes-optimal observer with Gaussian observations
//!   whose quality degrades with load, giving closed-form rates;
//! * [`CapacityModel`]: a human who follows a fixed decision procedure for as
//!   many tasks as fit in the round and guesses the rest;
//! * [`PerfTable`]: measured rates at a few loads, linearly interpolated.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cost::{check_probability, posterior_from_log_likelihood_ratio, DecisionCosts, Hypothesis, Posterior, Prior};
use crate::error::{Error, Result};
use crate::normal::upper_tail;

/// A (true positive rate, false positive rate) operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    tpr: f64,
    fpr: f64,
}

impl Rates {
    pub fn new(tpr: f64, fpr: f64) -> Result<Self> {
        Ok(Rates { tpr: check_probability("tpr", tpr)?, fpr: check_probability("fpr", fpr)? })
    }

    /// A coin flip: both rates one half.
    pub const GUESS: Rates = Rates { tpr: 0.5, fpr: 0.5 };

    pub fn tpr(&self) -> f64 {
        self.tpr
    }

    pub fn fpr(&self) -> f64 {
        self.fpr
    }

    /// `P(decide H1 | truth)`.
    pub fn positive_rate(&self, truth: Hypothesis) -> f64 {
        match truth {
            Hypothesis::H1 => self.tpr,
            Hypothesis::H0 => self.fpr,
        }
    }

    fn mix(self, weight: f64, other: Rates) -> Rates {
        Rates {
            tpr: weight * self.tpr + (1.0 - weight) * other.tpr,
            fpr: weight * self.fpr + (1.0 - weight) * other.fpr,
        }
    }

    /// Expected cost of a task drawn from `prior` and decided at this operating point.
    pub fn mean_cost(&self, prior: Prior, costs: &DecisionCosts) -> f64 {
        prior.pi1() * (self.tpr * costs.c_tp() + (1.0 - self.tpr) * costs.c_fn())
            + prior.pi0() * (self.fpr * costs.c_fp() + (1.0 - self.fpr) * costs.c_tn())
    }
}

/// Maps a task load to the human's operating point.
pub trait PerfModel {
    fn rates(&self, load: usize) -> Result<Rates>;
}

impl<T: PerfModel + ?Sized> PerfModel for &T {
    fn rates(&self, load: usize) -> Result<Rates> {
        (**self).rates(load)
    }
}

/// Observations `N(mean0, sigma^2)` under `H0` and `N(mean1, sigma^2)` under `H1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianObsModel {
    pub mean0: f64,
    pub mean1: f64,
    pub sigma: f64,
}

impl GaussianObsModel {
    pub fn new(mean0: f64, mean1: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if !mean0.is_finite() || !mean1.is_finite() {
            return Err(Error::InvalidParameter("means must be finite".into()));
        }
        Ok(GaussianObsModel { mean0, mean1, sigma })
    }

    /// The conventional shift model: `N(0, sigma^2)` against `N(shift, sigma^2)`.
    pub fn shifted(shift: f64, sigma: f64) -> Result<Self> {
        GaussianObsModel::new(0.0, shift, sigma)
    }

    pub fn mean(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::H0 => self.mean0,
            Hypothesis::H1 => self.mean1,
        }
    }

    pub fn separation(&self) -> f64 {
        self.mean1 - self.mean0
    }

    /// `ln p(y | H1) - ln p(y | H0)`; the normalising constants cancel.
    pub fn log_likelihood_ratio(&self, y: f64) -> f64 {
        let mid = 0.5 * (self.mean0 + self.mean1);
        self.separation() * (y - mid) / (self.sigma * self.sigma)
    }

    pub fn posterior(&self, prior: Prior, y: f64) -> Posterior {
        posterior_from_log_likelihood_ratio(prior, self.log_likelihood_ratio(y))
            .expect("finite log-likelihood ratio always yields a posterior")
    }

    /// Draws one observation under `h`.
    pub fn sample<R: Rng + ?Sized>(&self, h: Hypothesis, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean(h) + self.sigma * z
    }

    /// Rates of the Bayes test `posterior >= threshold(costs)` on this model.
    ///
    /// The test is equivalent to `y >= tau` with
    /// `tau = mean0 + d/2 + (sigma^2 / d) ln(((c_fp - c_tn) pi0) / ((c_fn - c_tp) pi1))`
    /// for a positive separation `d`.
    pub fn bayes_rates(&self, costs: &DecisionCosts, prior: Prior, load: usize) -> Result<Rates> {
        let d = self.separation();
        if d == 0.0 {
            return Err(Error::ZeroSeparation(load));
        }
        if d < 0.0 {
            return Err(Error::InvalidParameter("mean1 must exceed mean0".into()));
        }
        let tau = threshold_offset(d, self.sigma, costs, prior)?;
        let fpr = upper_tail(tau / self.sigma);
        let tpr = upper_tail((tau - d) / self.sigma);
        Rates::new(tpr, fpr)
    }
}

fn threshold_offset(separation: f64, sigma: f64, costs: &DecisionCosts, prior: Prior) -> Result<f64> {
    let num = (costs.c_fp() - costs.c_tn()) * prior.pi0();
    let den = (costs.c_fn() - costs.c_tp()) * prior.pi1();
    if !(num > 0.0 && den > 0.0) {
        return Err(Error::InvalidParameter("threshold needs 0 < pi1 < 1".into()));
    }
    Ok(separation / 2.0 + sigma * sigma / separation * (num / den).ln())
}

/// Posterior threshold of the Bayes test: decide `H1` iff the posterior is at least this.
pub fn bayes_threshold(costs: &DecisionCosts) -> f64 {
    costs.threshold()
}

/// The Bayes decision of a human holding posterior `p`. Ties go to `H1`.
pub fn simulate_human_decision(p: Posterior, costs: &DecisionCosts) -> Hypothesis {
    Hypothesis::from_positive(p.value() >= costs.threshold())
}

/// How the human's observations degrade with load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawCase {
    /// The mean under `H1` shrinks linearly to zero at full load.
    ShrinkingMean,
    /// The variance grows linearly, doubling at full load.
    GrowingVariance,
}

/// Load-dependent Gaussian observation law of the human.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanObsLaw {
    pub case: LawCase,
    /// Mean under `H1` at zero load.
    pub mu0: f64,
    /// Standard deviation at zero load.
    pub sigma0: f64,
    /// Batch size `K`; loads range over `0..=K`.
    pub batch_size: usize,
}

impl HumanObsLaw {
    pub fn new(case: LawCase, mu0: f64, sigma0: f64, batch_size: usize) -> Result<Self> {
        if !(sigma0 > 0.0) || !mu0.is_finite() || !sigma0.is_finite() {
            return Err(Error::InvalidParameter(format!("bad human law parameters mu0={mu0}, sigma0={sigma0}")));
        }
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        Ok(HumanObsLaw { case, mu0, sigma0, batch_size })
    }

    /// `(mu_h(w), sigma_h(w))`.
    pub fn params(&self, load: usize) -> Result<(f64, f64)> {
        if load > self.batch_size {
            return Err(Error::LoadOutOfDomain { load, domain: format!("0..={}", self.batch_size) });
        }
        let frac = load as f64 / self.batch_size as f64;
        Ok(match self.case {
            LawCase::ShrinkingMean => ((1.0 - frac) * self.mu0, self.sigma0),
            LawCase::GrowingVariance => (self.mu0, self.sigma0 * (1.0 + frac).sqrt()),
        })
    }

    pub fn model(&self, load: usize) -> Result<GaussianObsModel> {
        let (mu, sigma) = self.params(load)?;
        GaussianObsModel::shifted(mu, sigma)
    }

    /// Conditions under which referral is a real trade-off against an
    /// automation with observation model `auto`. Returns the violated ones.
    pub fn tradeoff_violations(&self, auto: &GaussianObsModel) -> Vec<String> {
        let k = self.batch_size as f64;
        let sa2 = auto.sigma * auto.sigma;
        let s02 = self.sigma0 * self.sigma0;
        let d = auto.separation();
        let mut out = Vec::new();
        match self.case {
            LawCase::ShrinkingMean => {
                let upper = (1.0 - 1.0 / k) * self.mu0;
                if !(0.0 < d && d < upper) {
                    out.push(format!("need 0 < d ({d}) < (1 - 1/K) mu0 ({upper})"));
                }
                if s02 > sa2 {
                    out.push(format!("need sigma0^2 ({s02}) <= sigma_a^2 ({sa2})"));
                }
            }
            LawCase::GrowingVariance => {
                if !((1.0 + 1.0 / k) * s02 < sa2 && sa2 < 2.0 * s02) {
                    out.push(format!("need (1 + 1/K) sigma0^2 < sigma_a^2 ({sa2}) < 2 sigma0^2 ({})", 2.0 * s02));
                }
            }
        }
        out
    }
}

/// Threshold `tau(w)` on the human's observation for the Bayes test.
pub fn tau(law: &HumanObsLaw, load: usize, costs: &DecisionCosts, prior: Prior) -> Result<f64> {
    let (mu, sigma) = law.params(load)?;
    if mu == 0.0 {
        return Err(Error::ZeroSeparation(load));
    }
    threshold_offset(mu, sigma, costs, prior)
}

/// Closed-form rates of a Bayes-optimal human with a Gaussian observation law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticHuman {
    pub law: HumanObsLaw,
    pub costs: DecisionCosts,
    pub prior: Prior,
}

impl AnalyticHuman {
    pub fn new(law: HumanObsLaw, costs: DecisionCosts, prior: Prior) -> Self {
        AnalyticHuman { law, costs, prior }
    }

    /// Decision of this human on a task in state `truth` at the given load.
    ///
    /// With coinciding means the observation carries no information and the
    /// human flips a fair coin, matching [`PerfModel::rates`] there.
    pub fn decide<R: Rng + ?Sized>(&self, truth: Hypothesis, load: usize, rng: &mut R) -> Result<Hypothesis> {
        let model = self.law.model(load)?;
        if model.separation() == 0.0 {
            return Ok(Hypothesis::from_positive(rng.random::<bool>()));
        }
        let y = model.sample(truth, rng);
        Ok(simulate_human_decision(model.posterior(self.prior, y), &self.costs))
    }
}

impl PerfModel for AnalyticHuman {
    fn rates(&self, load: usize) -> Result<Rates> {
        let model = self.law.model(load)?;
        if model.separation() == 0.0 {
            return Ok(Rates::GUESS);
        }
        model.bayes_rates(&self.costs, self.prior, load)
    }
}

/// A human who completes at most `capacity` tasks with the reference
/// procedure and has the rest labelled by a fair coin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityModel {
    pub tree: Rates,
    pub capacity: usize,
}

impl CapacityModel {
    pub fn new(tree: Rates, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("capacity must be at least 1".into()));
        }
        Ok(CapacityModel { tree, capacity })
    }

    /// Capacity from the round length and the time one task takes.
    pub fn from_timing(tree: Rates, round_seconds: f64, seconds_per_task: f64) -> Result<Self> {
        if !(round_seconds > 0.0 && seconds_per_task > 0.0) {
            return Err(Error::InvalidParameter("timings must be positive".into()));
        }
        CapacityModel::new(tree, (round_seconds / seconds_per_task).floor() as usize)
    }
}

impl PerfModel for CapacityModel {
    fn rates(&self, load: usize) -> Result<Rates> {
        if load <= self.capacity {
            return Ok(self.tree);
        }
        let done = self.capacity as f64 / load as f64;
        Ok(self.tree.mix(done, Rates::GUESS))
    }
}

/// Rates measured at a few loads. Exact at the knots, linear between them,
/// and clamped to the nearest knot outside the measured range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PerfTableRepr", into = "PerfTableRepr")]
pub struct PerfTable {
    loads: Vec<usize>,
    rates: Vec<Rates>,
}

#[derive(Serialize, Deserialize)]
struct PerfTableRepr {
    loads: Vec<usize>,
    tpr: Vec<f64>,
    fpr: Vec<f64>,
}

impl TryFrom<PerfTableRepr> for PerfTable {
    type Error = Error;
    fn try_from(r: PerfTableRepr) -> Result<Self> {
        PerfTable::new(r.loads, r.tpr, r.fpr)
    }
}

impl From<PerfTable> for PerfTableRepr {
    fn from(t: PerfTable) -> Self {
        PerfTableRepr {
            tpr: t.rates.iter().map(Rates::tpr).collect(),
            fpr: t.rates.iter().map(Rates::fpr).collect(),
            loads: t.loads,
        }
    }
}

impl PerfTable {
    pub fn new(loads: Vec<usize>, tpr: Vec<f64>, fpr: Vec<f64>) -> Result<Self> {
        if loads.is_empty() {
            return Err(Error::EmptyTable);
        }
        if loads.len() != tpr.len() || loads.len() != fpr.len() {
            return Err(Error::InvalidParameter(format!(
                "table columns differ in length: {} loads, {} tpr, {} fpr",
                loads.len(),
                tpr.len(),
                fpr.len()
            )));
        }
        if loads.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("table loads must be strictly increasing".into()));
        }
        let rates = tpr.into_iter().zip(fpr).map(|(t, f)| Rates::new(t, f)).collect::<Result<_>>()?;
        Ok(PerfTable { loads, rates })
    }

    /// The same rates at every listed load.
    pub fn constant(loads: &[usize], rates: Rates) -> Self {
        let mut loads = loads.to_vec();
        loads.sort_unstable();
        loads.dedup();
        assert!(!loads.is_empty(), "constant table needs a load");
        PerfTable { rates: vec![rates; loads.len()], loads }
    }

    /// Tabulates `model` at `loads`.
    pub fn tabulate<M: PerfModel + ?Sized>(model: &M, loads: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut ls: Vec<usize> = loads.into_iter().collect();
        ls.sort_unstable();
        ls.dedup();
        if ls.is_empty() {
            return Err(Error::EmptyTable);
        }
        let rates = ls.iter().map(|&w| model.rates(w)).collect::<Result<_>>()?;
        Ok(PerfTable { loads: ls, rates })
    }

    pub fn loads(&self) -> &[usize] {
        &self.loads
    }

    pub fn knots(&self) -> impl Iterator<Item = (usize, Rates)> + '_ {
        self.loads.iter().copied().zip(self.rates.iter().copied())
    }

    /// True when `load` lies outside the measured range and would be clamped.
    pub fn is_extrapolated(&self, load: usize) -> bool {
        load < self.loads[0] || load > *self.loads.last().unwrap()
    }
}

impl PerfModel for PerfTable {
    fn rates(&self, load: usize) -> Result<Rates> {
        let i = self.loads.partition_point(|&l| l < load);
        if i < self.loads.len() && self.loads[i] == load {
            return Ok(self.rates[i]);
        }
        if i == 0 {
            return Ok(self.rates[0]);
        }
        if i == self.loads.len() {
            return Ok(self.rates[i - 1]);
        }
        let (w0, w1) = (self.loads[i - 1] as f64, self.loads[i] as f64);
        let t = (load as f64 - w0) / (w1 - w0);
        Ok(self.rates[i].mix(t, self.rates[i - 1]))
    }
}

/// Any of the supported human performance sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HumanPerfModel {
    Analytic(AnalyticHuman),
    Table(PerfTable),
    Capacity(CapacityModel),
}

impl PerfModel for HumanPerfModel {
    fn rates(&self, load: usize) -> Result<Rates> {
        match self {
            HumanPerfModel::Analytic(m) => m.rates(load),
            HumanPerfModel::Table(m) => m.rates(load),
            HumanPerfModel::Capacity(m) => m.rates(load),
        }
    }
}

/// Rates of the automation; they do not depend on load.
pub type AutomationPerf = Rates;
