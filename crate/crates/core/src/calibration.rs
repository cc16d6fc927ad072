//! Learning-rate calibration: tune omega so that Gibbs credible intervals
//! computed on bootstrap resamples cover the full-data M-estimate at the
//! nominal rate.
//!
//! The bootstrap resamples, their starting points and their sampler seeds are
//! drawn once and reused at every omega, so the estimated coverage is a
//! deterministic step function of omega and successive iterations differ only
//! through omega.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::resample;
use crate::data::{ClassProbs, ClassWeights, Dataset};
use crate::diagnostics::quantile_interval;
use crate::error::{Error, Result};
use crate::mestimator::minimize_multiclass;
use crate::prior::OrderedNormalSpec;
use crate::rng::{derive, stream};
use crate::sampler::{run_chain, GibbsPosterior, InitStrategy, SamplerConfig};

pub const OMEGA_MIN: f64 = 1e-6;
pub const OMEGA_MAX: f64 = 1e6;
const RESAMPLE_TAG: u64 = 0x6770_632d_626f_6f74;
const CHAIN_TAG: u64 = 0x6770_632d_6368_6e73;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// A replicate covers when every marginal interval contains its component.
    Simultaneous,
    /// Average of the per-component coverage proportions.
    PerComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpcConfig {
    pub level: f64,
    /// Bootstrap replicates per coverage estimate.
    pub replicates: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Step size `kappa_t = kappa0 * t^(-decay)` on the log-omega scale.
    pub kappa0: f64,
    pub decay: f64,
    pub omega_init: f64,
    pub coverage: CoverageMode,
    pub seed: u64,
}

impl Default for GpcConfig {
    fn default() -> Self {
        Self {
            level: 0.95,
            replicates: 200,
            max_iter: 20,
            tol: 0.02,
            kappa0: 1.0,
            decay: 0.51,
            omega_init: 1.0,
            coverage: CoverageMode::Simultaneous,
            seed: 0,
        }
    }
}

impl GpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter(format!("level {} outside (0,1)", self.level)));
        }
        if self.replicates < 50 {
            return Err(Error::InvalidParameter(format!("need at least 50 replicates, got {}", self.replicates)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.omega_init > 0.0 && self.omega_init.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega_init must be positive: {}", self.omega_init)));
        }
        if !(self.tol >= 0.0 && self.kappa0 >= 0.0 && self.decay > 0.0) {
            return Err(Error::InvalidParameter("tol, kappa0 must be non-negative and decay positive".into()));
        }
        Ok(())
    }

    pub fn step(&self, t: usize) -> f64 {
        self.kappa0 * (t as f64).powf(-self.decay)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpcStep {
    pub omega: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpcTrace {
    pub steps: Vec<GpcStep>,
    pub omega: f64,
    pub converged: bool,
    /// Some update left `[OMEGA_MIN, OMEGA_MAX]` and was clamped.
    pub clamped: bool,
    /// Full-data M-estimate used as the coverage target.
    pub target: Vec<f64>,
    pub coverage_mode: CoverageMode,
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub coverage: f64,
    pub per_component: Vec<f64>,
}

/// Bootstrap posteriors prepared once and re-run at each omega.
pub struct CoverageProblem {
    posteriors: Vec<GibbsPosterior>,
    inits: Vec<Vec<f64>>,
    target: Vec<f64>,
    sampler: SamplerConfig,
    gpc: GpcConfig,
    redraws: usize,
}

impl CoverageProblem {
    pub fn new(
        dataset: &Dataset,
        probs: &ClassProbs,
        weights: &ClassWeights,
        prior: &OrderedNormalSpec,
        gpc: &GpcConfig,
        sampler: &SamplerConfig,
    ) -> Result<Self> {
        gpc.validate()?;
        dataset.ensure_valid()?;
        let target = minimize_multiclass(dataset, probs, weights)?.theta_hat.into_inner();
        sampler.validate(target.len())?;
        let resample_seed = derive(gpc.seed, RESAMPLE_TAG);
        let prepared: Vec<(GibbsPosterior, Vec<f64>, usize)> = (0..gpc.replicates)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream(resample_seed, b as u64);
                let (data, redraws) = resample(dataset, probs.source(), &mut rng)?;
                let p = probs.for_resample(&data)?;
                let init = minimize_multiclass(&data, &p, weights)?.theta_hat.into_inner();
                let post = GibbsPosterior::multiclass(&data, &p, weights, prior.clone(), gpc.omega_init)?;
                Ok((post, init, redraws))
            })
            .collect::<Result<_>>()?;
        let redraws = prepared.iter().map(|p| p.2).sum();
        let (posteriors, inits) = prepared.into_iter().map(|(p, i, _)| (p, i)).unzip();
        Ok(Self { posteriors, inits, target, sampler: sampler.clone(), gpc: gpc.clone(), redraws })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn redraws(&self) -> usize {
        self.redraws
    }

    pub fn coverage(&mut self, omega: f64) -> Result<CoverageEstimate> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega must be positive: {omega}")));
        }
        let chain_seed = derive(self.gpc.seed, CHAIN_TAG);
        let level = self.gpc.level;
        let target = &self.target;
        let sampler = &self.sampler;
        let hits: Vec<Vec<bool>> = self
            .posteriors
            .par_iter_mut()
            .zip(&self.inits)
            .enumerate()
            .map(|(b, (post, init))| {
                post.set_learning_rate(omega)?;
                let cfg = SamplerConfig {
                    init: InitStrategy::Explicit(init.clone()),
                    seed: derive(chain_seed, b as u64),
                    ..sampler.clone()
                };
                let chain = run_chain(post, &cfg)?;
                (0..target.len())
                    .map(|j| Ok(quantile_interval(&chain.column(j), level)?.contains(target[j])))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let reps = hits.len() as f64;
        let per_component: Vec<f64> = (0..self.target.len())
            .map(|j| hits.iter().filter(|h| h[j]).count() as f64 / reps)
            .collect();
        let coverage = match self.gpc.coverage {
            CoverageMode::Simultaneous => hits.iter().filter(|h| h.iter().all(|&c| c)).count() as f64 / reps,
            CoverageMode::PerComponent => per_component.iter().sum::<f64>() / per_component.len() as f64,
        };
        Ok(CoverageEstimate { coverage, per_component })
    }
}

/// Bootstrap coverage of the level-credible intervals at a single omega.
pub fn estimate_coverage(
    omega: f64,
    dataset: &Dataset,
    probs: &ClassProbs,
    weights: &ClassWeights,
    prior: &OrderedNormalSpec,
    gpc: &GpcConfig,
    sampler: &SamplerConfig,
) -> Result<CoverageEstimate> {
    CoverageProblem::new(dataset, probs, weights, prior, gpc, sampler)?.coverage(omega)
}

/// Robbins–Monro search on `log omega` for nominal bootstrap coverage.
pub fn calibrate(
    dataset: &Dataset,
    probs: &ClassProbs,
    weights: &ClassWeights,
    prior: &OrderedNormalSpec,
    gpc: &GpcConfig,
    sampler: &SamplerConfig,
) -> Result<GpcTrace> {
    let mut problem = CoverageProblem::new(dataset, probs, weights, prior, gpc, sampler)?;
    calibrate_with(gpc, |omega| Ok(problem.coverage(omega)?.coverage)).map(|mut trace| {
        trace.target = problem.target.clone();
        trace.redraws = problem.redraws;
        trace
    })
}

/// The calibration recursion for an arbitrary coverage function.
pub fn calibrate_with<F>(gpc: &GpcConfig, mut coverage: F) -> Result<GpcTrace>
where
    F: FnMut(f64) -> Result<f64>,
{
    gpc.validate()?;
    let mut omega = gpc.omega_init;
    let mut steps = Vec::with_capacity(gpc.max_iter);
    let mut converged = false;
    let mut clamped = false;
    for t in 1..=gpc.max_iter {
        let c = coverage(omega)?;
        steps.push(GpcStep { omega, coverage: c });
        if (c - gpc.level).abs() <= gpc.tol {
            converged = true;
            break;
        }
        let next = (omega.ln() + gpc.step(t) * (c - gpc.level)).exp();
        if !(OMEGA_MIN..=OMEGA_MAX).contains(&next) {
            clamped = true;
        }
        omega = next.clamp(OMEGA_MIN, OMEGA_MAX);
    }
    Ok(GpcTrace {
        steps,
        omega,
        converged: converged && !clamped,
        clamped,
        target: Vec::new(),
        coverage_mode: gpc.coverage,
        redraws: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    #[test]
    fn fixed_point_converges_immediately() {
        let gpc = GpcConfig { omega_init: 2.5, ..GpcConfig::default() };
        let trace = calibrate_with(&gpc, |_| Ok(0.95)).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.omega, 2.5);
    }

    #[test]
    fn over_coverage_raises_omega() {
        let trace = calibrate_with(&GpcConfig::default(), |_| Ok(1.0)).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.steps.len(), 20);
        assert!(trace.steps.windows(2).all(|w| w[1].omega > w[0].omega));
        assert!(trace.omega > trace.steps.last().unwrap().omega);
    }

    #[test]
    fn under_coverage_lowers_omega() {
        let trace = calibrate_with(&GpcConfig::default(), |_| Ok(0.5)).unwrap();
        assert!(trace.steps.windows(2).all(|w| w[1].omega < w[0].omega));
    }

    #[test]
    fn clamped_updates_are_flagged() {
        let gpc = GpcConfig { kappa0: 1e3, ..GpcConfig::default() };
        let trace = calibrate_with(&gpc, |_| Ok(1.0)).unwrap();
        assert!(trace.clamped);
        assert!(!trace.converged);
        assert!(trace.steps.iter().all(|s| s.omega > 0.0 && s.omega <= OMEGA_MAX));
        assert_eq!(trace.omega, OMEGA_MAX);
    }

    #[test]
    fn config_validation() {
        assert!(GpcConfig { replicates: 49, ..GpcConfig::default() }.validate().is_err());
        assert!(GpcConfig { level: 1.0, ..GpcConfig::default() }.validate().is_err());
        assert!(GpcConfig { omega_init: 0.0, ..GpcConfig::default() }.validate().is_err());
    }

    fn overlapping() -> Dataset {
        let mut obs = Vec::new();
        for i in 0..25 {
            let u = (i as f64 + 0.5) / 25.0;
            obs.push(Observation::new(2.0 * u, 1));
            obs.push(Observation::new(0.8 + 2.0 * u, 2));
        }
        Dataset::multiclass(obs, 2).unwrap()
    }

    #[test]
    fn coverage_falls_with_omega() {
        let ds = overlapping();
        let prior = OrderedNormalSpec::isotropic(vec![1.4], 5.0).unwrap();
        let gpc = GpcConfig { replicates: 60, seed: 7, ..GpcConfig::default() };
        let sampler = SamplerConfig { iterations: 1_500, burn_in: 300, ..SamplerConfig::short() };
        let mut problem =
            CoverageProblem::new(&ds, &ClassProbs::uniform(2), &ClassWeights::equal(2), &prior, &gpc, &sampler).unwrap();
        let small = problem.coverage(1e-4).unwrap().coverage;
        let large = problem.coverage(1e3).unwrap().coverage;
        assert_eq!(small, 1.0);
        assert!(large < small);
        assert_eq!(problem.coverage(1e3).unwrap().coverage, large);
    }
}
