//! Gibbs posteriors `exp(-omega n R_n(param)) pi(param)` and an adaptive
//! Metropolis-within-Gibbs sampler for them.
//!
//! Each sweep proposes a Gaussian random-walk move for one coordinate at a
//! time. During burn-in the per-coordinate proposal scale follows a
//! Robbins–Monro recursion on the log scale towards the target acceptance
//! rate; afterwards it is frozen so the retained draws come from a fixed
//! Metropolis kernel. Proposals that break the cutoff ordering, or leave the
//! support of the coefficient prior, have zero prior density and are rejected.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClassProbs, ClassWeights, Dataset, ProblemKind};
use crate::error::{Error, Result};
use crate::mestimator::{minimize_covariate, minimize_multiclass, CovariateSearch};
use crate::objective::{CovariateObjective, MulticlassObjective};
use crate::prior::{BetaPriorSpec, OrderedNormalSpec};
use crate::rng::stream;
use crate::spline::BSplineBasis;
use crate::stats::{sorted_copy, variance};

#[derive(Debug, Clone)]
enum Target {
    Multiclass { objective: MulticlassObjective, prior: OrderedNormalSpec },
    Covariate { objective: CovariateObjective, prior: BetaPriorSpec },
}

/// A Gibbs posterior over cutoffs (multi-class) or spline coefficients
/// (covariate-adjusted).
#[derive(Debug, Clone)]
pub struct GibbsPosterior {
    dataset: Dataset,
    probs: ClassProbs,
    weights: ClassWeights,
    target: Target,
    learning_rate: f64,
}

impl GibbsPosterior {
    pub fn multiclass(
        dataset: &Dataset,
        probs: &ClassProbs,
        weights: &ClassWeights,
        prior: OrderedNormalSpec,
        learning_rate: f64,
    ) -> Result<Self> {
        check_rate(learning_rate)?;
        dataset.ensure_kind(ProblemKind::Multiclass)?;
        dataset.ensure_valid()?;
        if prior.dim() != dataset.k() - 1 {
            return Err(Error::DimensionMismatch { expected: dataset.k() - 1, got: prior.dim() });
        }
        let objective = MulticlassObjective::new(dataset, probs, weights)?;
        Ok(Self {
            dataset: dataset.clone(),
            probs: probs.clone(),
            weights: weights.clone(),
            target: Target::Multiclass { objective, prior },
            learning_rate,
        })
    }

    pub fn covariate(
        dataset: &Dataset,
        probs: &ClassProbs,
        basis: &BSplineBasis,
        prior: BetaPriorSpec,
        learning_rate: f64,
    ) -> Result<Self> {
        check_rate(learning_rate)?;
        dataset.ensure_kind(ProblemKind::Covariate)?;
        dataset.ensure_valid()?;
        prior.check_dim(basis.dim())?;
        let objective = CovariateObjective::new(dataset, probs, basis)?;
        Ok(Self {
            dataset: dataset.clone(),
            probs: probs.clone(),
            weights: ClassWeights::equal(2),
            target: Target::Covariate { objective, prior },
            learning_rate,
        })
    }

    /// Same data and prior at another learning rate.
    pub fn with_learning_rate(&self, learning_rate: f64) -> Result<Self> {
        check_rate(learning_rate)?;
        let mut out = self.clone();
        out.learning_rate = learning_rate;
        Ok(out)
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) -> Result<()> {
        check_rate(learning_rate)?;
        self.learning_rate = learning_rate;
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn kind(&self) -> ProblemKind {
        match self.target {
            Target::Multiclass { .. } => ProblemKind::Multiclass,
            Target::Covariate { .. } => ProblemKind::Covariate,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.target {
            Target::Multiclass { objective, .. } => objective.dim(),
            Target::Covariate { objective, .. } => objective.dim(),
        }
    }

    fn n(&self) -> f64 {
        self.dataset.len() as f64
    }

    pub fn risk(&self, param: &[f64]) -> f64 {
        match &self.target {
            Target::Multiclass { objective, .. } => objective.risk(param),
            Target::Covariate { objective, .. } => objective.risk(param),
        }
    }

    pub fn log_prior(&self, param: &[f64]) -> f64 {
        match &self.target {
            Target::Multiclass { prior, .. } => prior.log_density(param),
            Target::Covariate { prior, .. } => prior.log_density(param),
        }
    }

    /// Unnormalized log density `-omega n R_n(param) + log pi(param)`.
    pub fn log_pseudo_posterior(&self, param: &[f64]) -> Result<f64> {
        if param.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: param.len() });
        }
        let lp = self.log_prior(param);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(-self.learning_rate * self.n() * self.risk(param) + lp)
    }

    /// Minimizer of the empirical risk, used as the default start.
    pub fn m_estimate(&self) -> Result<Vec<f64>> {
        match &self.target {
            Target::Multiclass { .. } => {
                Ok(minimize_multiclass(&self.dataset, &self.probs, &self.weights)?.theta_hat.into_inner())
            }
            Target::Covariate { objective, prior } => {
                let xs = sorted_copy(objective.x());
                let init = vec![xs[xs.len() / 2]; objective.dim()];
                let search = CovariateSearch { bound: prior.bound, ..CovariateSearch::default() };
                Ok(minimize_covariate(&self.dataset, &self.probs, objective.basis(), &init, &search)?.beta_hat)
            }
        }
    }

    fn prior_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        match &self.target {
            Target::Multiclass { prior, .. } => Some(prior.sample(rng).into_inner()),
            Target::Covariate { .. } => None,
        }
    }

    fn default_scale(&self) -> f64 {
        let x: Vec<f64> = self.dataset.observations().iter().map(|o| o.x).collect();
        let sd = if x.len() > 1 { variance(&x).sqrt() } else { 1.0 };
        if sd > 0.0 {
            0.1 * sd
        } else {
            0.1
        }
    }
}

fn check_rate(w: f64) -> Result<()> {
    if w >= 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("learning rate must be non-negative and finite: {w}")))
    }
}

pub fn log_pseudo_posterior(posterior: &GibbsPosterior, param: &[f64]) -> Result<f64> {
    posterior.log_pseudo_posterior(param)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", content = "value", rename_all = "snake_case")]
pub enum InitStrategy {
    MEstimate,
    Prior,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Sweeps per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub init: InitStrategy,
    /// Initial per-coordinate proposal sds; `None` uses a tenth of the sd of `x`.
    pub proposal_scales: Option<Vec<f64>>,
    pub adapt: bool,
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 1,
            chains: 4,
            init: InitStrategy::MEstimate,
            proposal_scales: None,
            adapt: true,
            target_accept: 0.30,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    /// Short single-chain runs used inside learning-rate calibration.
    pub fn short() -> Self {
        Self { iterations: 4_000, burn_in: 1_000, chains: 1, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidParameter("iterations must exceed burn-in".into()));
        }
        if self.thin == 0 || self.chains == 0 {
            return Err(Error::InvalidParameter("thin and chains must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidParameter("target acceptance must lie in (0,1)".into()));
        }
        if let Some(s) = &self.proposal_scales {
            if s.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.len() });
            }
            if s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter("proposal scales must be positive".into()));
            }
        }
        if let InitStrategy::Explicit(v) = &self.init {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
            }
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Retained MCMC output, pooled over chains in chain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub draws: Vec<Vec<f64>>,
    pub chains: usize,
    /// Post burn-in acceptance rate over all coordinates.
    pub acceptance_rate: f64,
    pub coordinate_acceptance: Vec<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Frozen proposal scales, averaged over chains.
    pub proposal_scales: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PosteriorChain {
    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn chain_len(&self) -> usize {
        self.draws.len() / self.chains.max(1)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    /// Draws of coordinate `j` split by chain.
    pub fn chain_columns(&self, j: usize) -> Vec<Vec<f64>> {
        let len = self.chain_len();
        (0..self.chains).map(|c| self.draws[c * len..(c + 1) * len].iter().map(|d| d[j]).collect()).collect()
    }
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    accepted: Vec<usize>,
    proposed: Vec<usize>,
    scales: Vec<f64>,
    warnings: Vec<String>,
}

/// Runs `config.chains` independent chains (in parallel) and pools them.
pub fn run_chain(posterior: &GibbsPosterior, config: &SamplerConfig) -> Result<PosteriorChain> {
    let dim = posterior.dim();
    config.validate(dim)?;
    let base_init = match &config.init {
        InitStrategy::MEstimate => Some(posterior.m_estimate()?),
        InitStrategy::Explicit(v) => Some(v.clone()),
        InitStrategy::Prior => None,
    };
    let scales = config.proposal_scales.clone().unwrap_or_else(|| vec![posterior.default_scale(); dim]);
    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(config.seed, c as u64);
            let init = match &base_init {
                Some(v) => v.clone(),
                None => match posterior.prior_draw(&mut rng) {
                    Some(v) => v,
                    None => posterior.m_estimate()?,
                },
            };
            single_chain(posterior, config, init, scales.clone(), &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut draws = Vec::with_capacity(config.chains * config.draws_per_chain());
    let mut accepted = vec![0usize; dim];
    let mut proposed = vec![0usize; dim];
    let mut mean_scales = vec![0.0; dim];
    let mut warnings = Vec::new();
    for (c, out) in outputs.into_iter().enumerate() {
        draws.extend(out.draws);
        for j in 0..dim {
            accepted[j] += out.accepted[j];
            proposed[j] += out.proposed[j];
            mean_scales[j] += out.scales[j] / config.chains as f64;
        }
        warnings.extend(out.warnings.into_iter().map(|w| format!("chain {c}: {w}")));
    }
    let total_acc: usize = accepted.iter().sum();
    let total_prop: usize = proposed.iter().sum();
    Ok(PosteriorChain {
        draws,
        chains: config.chains,
        acceptance_rate: if total_prop > 0 { total_acc as f64 / total_prop as f64 } else { 0.0 },
        coordinate_acceptance: accepted
            .iter()
            .zip(&proposed)
            .map(|(&a, &p)| if p > 0 { a as f64 / p as f64 } else { 0.0 })
            .collect(),
        burn_in: config.burn_in,
        thin: config.thin,
        learning_rate: posterior.learning_rate,
        seed: config.seed,
        proposal_scales: mean_scales,
        warnings,
    })
}

/// Per-coordinate state that makes one Metropolis update cheap.
enum State<'a> {
    Multiclass { objective: &'a MulticlassObjective, prior: &'a OrderedNormalSpec, log_prior: f64 },
    Covariate { objective: &'a CovariateObjective, prior: &'a BetaPriorSpec, fitted: Vec<f64>, scratch: Vec<f64> },
}

fn single_chain<R: Rng + ?Sized>(
    posterior: &GibbsPosterior,
    config: &SamplerConfig,
    init: Vec<f64>,
    mut scales: Vec<f64>,
    rng: &mut R,
) -> Result<ChainOutput> {
    let dim = posterior.dim();
    let mut param = init;
    if posterior.log_prior(&param) == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!("initial value {param:?} has zero prior density")));
    }
    let omega_n = posterior.learning_rate * posterior.n();
    let mut state = match &posterior.target {
        Target::Multiclass { objective, prior } => {
            State::Multiclass { objective, prior, log_prior: prior.log_density(&param) }
        }
        Target::Covariate { objective, prior } => State::Covariate {
            objective,
            prior,
            fitted: (0..objective.n()).map(|i| objective.fitted(i, &param)).collect(),
            scratch: Vec::new(),
        },
    };
    let initial_scales = scales.clone();
    let mut log_scales: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let mut burn_accepted = vec![0usize; dim];
    let mut accepted = vec![0usize; dim];
    let mut proposed = vec![0usize; dim];
    let mut warnings = Vec::new();
    let mut draws = Vec::with_capacity(config.draws_per_chain());

    for t in 0..config.iterations {
        let burning = t < config.burn_in;
        let gain = ((t + 1) as f64).powf(-0.6);
        for j in 0..dim {
            let step: f64 = rng.sample(StandardNormal);
            let old = param[j];
            let new = old + scales[j] * step;
            let log_ratio = match &mut state {
                State::Multiclass { objective, prior, log_prior } => {
                    let ordered = (j == 0 || param[j - 1] < new) && (j + 1 == dim || new < param[j + 1]);
                    if !ordered {
                        f64::NEG_INFINITY
                    } else {
                        param[j] = new;
                        let lp = prior.log_density(&param);
                        param[j] = old;
                        let data = -omega_n * (objective.term(j, new) - objective.term(j, old));
                        let r = data + (lp - *log_prior);
                        if r.is_nan() {
                            f64::NEG_INFINITY
                        } else {
                            r
                        }
                    }
                }
                State::Covariate { objective, prior, fitted, scratch } => {
                    let lp_new = prior.coord_log_density(j, new);
                    if lp_new == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        param[j] = new;
                        scratch.clear();
                        let mut delta_risk = 0.0;
                        for &i in objective.support(j) {
                            let f = objective.fitted(i, &param);
                            delta_risk += objective.loss(i, f) - objective.loss(i, fitted[i]);
                            scratch.push(f);
                        }
                        param[j] = old;
                        -omega_n * delta_risk + lp_new - prior.coord_log_density(j, old)
                    }
                }
            };
            let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
            if accept {
                param[j] = new;
                match &mut state {
                    State::Multiclass { prior, log_prior, .. } => *log_prior = prior.log_density(&param),
                    State::Covariate { objective, fitted, scratch, .. } => {
                        for (&i, &f) in objective.support(j).iter().zip(scratch.iter()) {
                            fitted[i] = f;
                        }
                    }
                }
            }
            if burning {
                burn_accepted[j] += accept as usize;
                if config.adapt {
                    let a = if accept { 1.0 } else { 0.0 };
                    log_scales[j] = (log_scales[j] + gain * (a - config.target_accept)).clamp(-30.0, 30.0);
                    scales[j] = log_scales[j].exp();
                }
            } else {
                proposed[j] += 1;
                accepted[j] += accept as usize;
            }
        }
        if t + 1 == config.burn_in {
            for j in 0..dim {
                if burn_accepted[j] == 0 {
                    warnings.push(format!("coordinate {j} rejected every burn-in proposal; scale reset"));
                    scales[j] = initial_scales[j];
                    log_scales[j] = scales[j].ln();
                }
            }
        }
        if !burning && (t - config.burn_in + 1) % config.thin == 0 {
            draws.push(param.clone());
        }
    }
    Ok(ChainOutput { draws, accepted, proposed, scales, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn toy() -> (Dataset, ClassProbs, ClassWeights) {
        let obs = [(0.1, 1), (0.7, 1), (1.3, 1), (0.9, 2), (2.1, 2), (2.6, 2)]
            .iter()
            .map(|&(x, y)| Observation::new(x, y))
            .collect();
        (Dataset::multiclass(obs, 2).unwrap(), ClassProbs::uniform(2), ClassWeights::equal(2))
    }

    #[test]
    fn zero_rate_is_prior() {
        let (ds, p, w) = toy();
        let prior = OrderedNormalSpec::isotropic(vec![1.0], 2.0).unwrap();
        let post = GibbsPosterior::multiclass(&ds, &p, &w, prior.clone(), 0.0).unwrap();
        for t in [-1.0, 0.8, 3.0] {
            assert_eq!(post.log_pseudo_posterior(&[t]).unwrap(), prior.log_density(&[t]));
        }
    }

    #[test]
    fn linear_in_learning_rate() {
        let (ds, p, w) = toy();
        let prior = OrderedNormalSpec::isotropic(vec![1.0], 2.0).unwrap();
        let a = GibbsPosterior::multiclass(&ds, &p, &w, prior.clone(), 0.7).unwrap();
        let b = a.with_learning_rate(1.4).unwrap();
        for t in [-1.0, 0.8, 1.5, 3.0] {
            let lp = prior.log_density(&[t]);
            let da = a.log_pseudo_posterior(&[t]).unwrap() - lp;
            let db = b.log_pseudo_posterior(&[t]).unwrap() - lp;
            assert!((db - 2.0 * da).abs() < 1e-12);
        }
    }

    #[test]
    fn unordered_param_has_no_mass() {
        let obs = [(0.0, 1), (1.0, 2), (2.0, 3)].iter().map(|&(x, y)| Observation::new(x, y)).collect();
        let ds = Dataset::multiclass(obs, 3).unwrap();
        let prior = OrderedNormalSpec::isotropic(vec![0.0, 1.0], 1.0).unwrap();
        let post = GibbsPosterior::multiclass(&ds, &ClassProbs::uniform(3), &ClassWeights::equal(3), prior, 1.0)
            .unwrap();
        assert_eq!(post.log_pseudo_posterior(&[1.0, 0.5]).unwrap(), f64::NEG_INFINITY);
        assert!(post.log_pseudo_posterior(&[1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = SamplerConfig { iterations: 10, burn_in: 10, ..SamplerConfig::default() };
        assert!(bad.validate(1).is_err());
        let bad = SamplerConfig { thin: 0, ..SamplerConfig::default() };
        assert!(bad.validate(1).is_err());
        let bad = SamplerConfig { proposal_scales: Some(vec![0.0]), ..SamplerConfig::default() };
        assert!(bad.validate(1).is_err());
        assert_eq!(SamplerConfig { iterations: 107, burn_in: 7, thin: 3, ..SamplerConfig::default() }.draws_per_chain(), 33);
    }

    #[test]
    fn chain_shape_and_determinism() {
        let (ds, p, w) = toy();
        let prior = OrderedNormalSpec::isotropic(vec![1.0], 5.0).unwrap();
        let post = GibbsPosterior::multiclass(&ds, &p, &w, prior, 1.0).unwrap();
        let cfg = SamplerConfig { iterations: 1_100, burn_in: 100, thin: 4, chains: 3, seed: 42, ..SamplerConfig::default() };
        let a = run_chain(&post, &cfg).unwrap();
        let b = run_chain(&post, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 3 * 250);
        assert_eq!(a.chain_len(), 250);
        assert!((0.0..=1.0).contains(&a.acceptance_rate));
    }

    #[test]
    fn retained_multiclass_draws_are_ordered() {
        let obs = [(0.0, 1), (0.5, 1), (1.0, 2), (1.2, 2), (2.0, 3), (2.2, 3)]
            .iter()
            .map(|&(x, y)| Observation::new(x, y))
            .collect();
        let ds = Dataset::multiclass(obs, 3).unwrap();
        let prior = OrderedNormalSpec::isotropic(vec![0.7, 1.6], 3.0).unwrap();
        let post =
            GibbsPosterior::multiclass(&ds, &ClassProbs::uniform(3), &ClassWeights::equal(3), prior, 0.5).unwrap();
        let chain = run_chain(&post, &SamplerConfig { iterations: 3_000, burn_in: 500, seed: 1, ..SamplerConfig::default() })
            .unwrap();
        assert!(chain.draws.iter().all(|d| d[0] < d[1]));
    }

    #[test]
    fn covariate_chain_respects_bound() {
        let rows = [(0.2, -1, 0.1), (1.4, 1, 0.3), (0.8, -1, 0.5), (2.2, 1, 0.9), (1.0, 1, 0.7), (0.3, -1, 0.8)];
        let ds = Dataset::covariate(rows.iter().map(|&(x, y, z)| Observation::with_covariate(x, y, z)).collect())
            .unwrap();
        let p = crate::data::estimate_class_probs(&ds).unwrap();
        let prior = BetaPriorSpec::flat(Some(3.0)).unwrap();
        let post = GibbsPosterior::covariate(&ds, &p, &BSplineBasis::default_cubic(), prior, 1.0).unwrap();
        let chain = run_chain(&post, &SamplerConfig { iterations: 2_000, burn_in: 200, chains: 2, seed: 5, ..SamplerConfig::default() })
            .unwrap();
        assert!(chain.draws.iter().flatten().all(|b| b.abs() <= 3.0));
        // cached fitted values stay consistent with the coefficients
        let last = chain.draws.last().unwrap();
        assert!(post.risk(last).is_finite());
    }
}
