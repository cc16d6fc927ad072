use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::bootstrap_intervals;
use crate::calibration::{calibrate, GpcConfig};
use crate::data::{ClassWeights, CredibleInterval};
use crate::diagnostics::{posterior_curve, quantile_interval, unit_grid};
use crate::error::{Error, Result};
use crate::prior::{BetaPriorSpec, OrderedNormalSpec};
use crate::rng::derive;
use crate::sampler::{run_chain, GibbsPosterior, SamplerConfig};
use crate::spline::BSplineBasis;
use crate::stats::{mean, variance};

use super::{generate, true_curve, true_cutoff, ScenarioId, ScenarioSpec};

pub const MIN_REPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bootstrap,
    /// Calibrated Gibbs posterior with a prior centred at the truth.
    GibbsGpcInformative,
    /// Calibrated Gibbs posterior with a wide prior.
    GibbsGpcVague,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bootstrap, Method::GibbsGpcInformative, Method::GibbsGpcVague];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bootstrap => "bootstrap",
            Method::GibbsGpcInformative => "gibbs-gpc-informative",
            Method::GibbsGpcVague => "gibbs-gpc-vague",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Method::Bootstrap => 1,
            Method::GibbsGpcInformative => 2,
            Method::GibbsGpcVague => 3,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    pub bootstrap_replicates: usize,
    pub gpc: GpcConfig,
    /// Chains run inside each coverage estimate.
    pub nested_sampler: SamplerConfig,
    /// Chain run at the calibrated learning rate.
    pub final_sampler: SamplerConfig,
    /// Informative prior sd; `None` uses 0.5, or 0.25 for mc3.
    pub informative_sd: Option<f64>,
    pub vague_sd: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            bootstrap_replicates: 1000,
            gpc: GpcConfig::default(),
            nested_sampler: SamplerConfig::short(),
            final_sampler: SamplerConfig::default(),
            informative_sd: None,
            vague_sd: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub intervals: Vec<CredibleInterval>,
    pub covered: Vec<bool>,
    /// Calibrated learning rate, for the Gibbs methods.
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub mean_length: Vec<f64>,
    /// Standard error of the mean length.
    pub length_se: Vec<f64>,
    pub coverage: Vec<f64>,
    /// Binomial Monte-Carlo standard error of the coverage.
    pub coverage_se: Vec<f64>,
    pub completed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
    pub records: Vec<ReplicateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: ScenarioId,
    pub n_per_group: usize,
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    pub truth: Vec<f64>,
    pub methods: Vec<MethodResult>,
}

impl StudyResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < MIN_REPS {
        Err(Error::InvalidParameter(format!("need at least {MIN_REPS} replicates, got {reps}")))
    } else {
        Ok(())
    }
}

fn default_informative_sd(id: ScenarioId) -> f64 {
    if id == ScenarioId::Mc3 {
        0.25
    } else {
        0.5
    }
}

fn one_replicate(
    spec: &ScenarioSpec,
    method: Method,
    truth: &[f64],
    level: f64,
    seed: u64,
    options: &StudyOptions,
) -> Result<(Vec<CredibleInterval>, Option<f64>)> {
    let sim = generate(spec, derive(seed, 0))?;
    let weights = ClassWeights::equal(spec.k());
    let method_seed = derive(seed, method.tag());
    if method == Method::Bootstrap {
        let r = bootstrap_intervals(&sim.dataset, &sim.probs, &weights, options.bootstrap_replicates, level, method_seed)?;
        return Ok((r.intervals, None));
    }
    let sd = match method {
        Method::GibbsGpcInformative => options.informative_sd.unwrap_or_else(|| default_informative_sd(spec.id)),
        _ => options.vague_sd,
    };
    let prior = OrderedNormalSpec::isotropic(truth.to_vec(), sd)?;
    let gpc = GpcConfig { level, seed: derive(method_seed, 1), ..options.gpc.clone() };
    let trace = calibrate(&sim.dataset, &sim.probs, &weights, &prior, &gpc, &options.nested_sampler)?;
    let post = GibbsPosterior::multiclass(&sim.dataset, &sim.probs, &weights, prior, trace.omega)?;
    let chain = run_chain(&post, &options.final_sampler.clone().with_seed(derive(method_seed, 2)))?;
    let intervals = (0..truth.len()).map(|j| quantile_interval(&chain.column(j), level)).collect::<Result<_>>()?;
    Ok((intervals, Some(trace.omega)))
}

/// Length and coverage of each method's intervals over `reps` simulated
/// datasets. Replicate `r` uses seed `derive(seed, r)` for its data, so every
/// method sees the same datasets.
pub fn run_study(
    spec: &ScenarioSpec,
    methods: &[Method],
    reps: usize,
    level: f64,
    seed: u64,
    options: &StudyOptions,
) -> Result<StudyResult> {
    check_reps(reps)?;
    spec.validate()?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level {level} outside (0,1)")));
    }
    let truth = true_cutoff(spec)?.into_inner();
    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let outcomes: Vec<Result<(Vec<CredibleInterval>, Option<f64>)>> = (0..reps)
            .into_par_iter()
            .map(|r| one_replicate(spec, method, &truth, level, derive(seed, r as u64), options))
            .collect();
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (r, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok((intervals, omega)) => {
                    let covered = intervals.iter().zip(&truth).map(|(iv, t)| iv.contains(*t)).collect();
                    records.push(ReplicateRecord { replicate: r, intervals, covered, omega });
                }
                Err(e) => failures.push(format!("replicate {r}: {e}")),
            }
        }
        results.push(aggregate(method, truth.len(), records, failures));
    }
    Ok(StudyResult { scenario: spec.id, n_per_group: spec.n_per_group, reps, level, seed, truth, methods: results })
}

fn aggregate(method: Method, dim: usize, records: Vec<ReplicateRecord>, failures: Vec<String>) -> MethodResult {
    let m = records.len() as f64;
    let mut out = MethodResult {
        method,
        mean_length: Vec::with_capacity(dim),
        length_se: Vec::with_capacity(dim),
        coverage: Vec::with_capacity(dim),
        coverage_se: Vec::with_capacity(dim),
        completed: records.len(),
        failed: failures.len(),
        failures,
        records: Vec::new(),
    };
    for j in 0..dim {
        let lengths: Vec<f64> = records.iter().map(|r| r.intervals[j].width()).collect();
        let c = records.iter().filter(|r| r.covered[j]).count() as f64 / m;
        out.mean_length.push(mean(&lengths));
        out.length_se.push(if lengths.len() > 1 { (variance(&lengths) / m).sqrt() } else { f64::NAN });
        out.coverage.push(c);
        out.coverage_se.push((c * (1.0 - c) / m).sqrt());
    }
    out.records = records;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateStudyOptions {
    pub basis: BSplineBasis,
    pub sampler: SamplerConfig,
    pub learning_rate: f64,
    pub level: f64,
    pub grid_points: usize,
    /// Error is integrated over `[error_range.0, error_range.1]`.
    pub error_range: (f64, f64),
}

impl Default for CovariateStudyOptions {
    fn default() -> Self {
        Self {
            basis: BSplineBasis::default_cubic(),
            sampler: SamplerConfig::default(),
            learning_rate: 1.0,
            level: 0.95,
            grid_points: 200,
            error_range: (0.05, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateStudyResult {
    pub scenario: ScenarioId,
    pub n_per_group: usize,
    pub reps: usize,
    pub seed: u64,
    pub z: Vec<f64>,
    pub truth: Vec<f64>,
    /// Across-replicate mean of the posterior mean curves.
    pub mean_curve: Vec<f64>,
    /// Across-replicate means of the lower and upper band curves.
    pub mean_lower: Vec<f64>,
    pub mean_upper: Vec<f64>,
    /// Integrated absolute error of `mean_curve` over the error range.
    pub l1_error: f64,
    /// Integrated absolute error of each replicate's posterior mean curve.
    pub replicate_l1: Vec<f64>,
    pub completed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

/// Trapezoid integral of `|a - b|` over grid points inside `[lo, hi]`.
pub(crate) fn l1_distance(z: &[f64], a: &[f64], b: &[f64], (lo, hi): (f64, f64)) -> f64 {
    let pts: Vec<(f64, f64)> = z
        .iter()
        .zip(a.iter().zip(b))
        .filter(|(&z, _)| z >= lo - 1e-12 && z <= hi + 1e-12)
        .map(|(&z, (x, y))| (z, (x - y).abs()))
        .collect();
    pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

/// Posterior-mean cutoff curves over `reps` simulated covariate datasets.
pub fn run_covariate_study(
    spec: &ScenarioSpec,
    reps: usize,
    seed: u64,
    options: &CovariateStudyOptions,
) -> Result<CovariateStudyResult> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be positive".into()));
    }
    spec.validate()?;
    if !spec.id.is_covariate() {
        return Err(Error::WrongKind("covariate scenario"));
    }
    let z = unit_grid(options.grid_points);
    let truth = true_curve(spec, &z)?;
    let outcomes: Vec<Result<Vec<(f64, f64, f64)>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive(seed, r as u64);
            let sim = generate(spec, derive(rep_seed, 0))?;
            let x: Vec<f64> = sim.dataset.observations().iter().map(|o| o.x).collect();
            let prior = BetaPriorSpec::flat_for_data(&x);
            let post = GibbsPosterior::covariate(&sim.dataset, &sim.probs, &options.basis, prior, options.learning_rate)?;
            let chain = run_chain(&post, &options.sampler.clone().with_seed(derive(rep_seed, 1)))?;
            let curve = posterior_curve(&chain.draws, &options.basis, &z, options.level)?;
            Ok(curve.into_iter().map(|p| (p.mean, p.lower, p.upper)).collect())
        })
        .collect();
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(c) => curves.push(c),
            Err(e) => failures.push(format!("replicate {r}: {e}")),
        }
    }
    if curves.is_empty() {
        return Err(Error::InvalidParameter(format!("every replicate failed: {}", failures.join("; "))));
    }
    let m = curves.len() as f64;
    let avg = |f: fn(&(f64, f64, f64)) -> f64| -> Vec<f64> {
        (0..z.len()).map(|i| curves.iter().map(|c| f(&c[i])).sum::<f64>() / m).collect()
    };
    let mean_curve = avg(|p| p.0);
    let mean_lower = avg(|p| p.1);
    let mean_upper = avg(|p| p.2);
    let replicate_l1 = curves
        .iter()
        .map(|c| {
            let means: Vec<f64> = c.iter().map(|p| p.0).collect();
            l1_distance(&z, &means, &truth, options.error_range)
        })
        .collect();
    Ok(CovariateStudyResult {
        scenario: spec.id,
        n_per_group: spec.n_per_group,
        reps,
        seed,
        l1_error: l1_distance(&z, &mean_curve, &truth, options.error_range),
        z,
        truth,
        mean_curve,
        mean_lower,
        mean_upper,
        replicate_l1,
        completed: curves.len(),
        failed: failures.len(),
        failures,
    })
}
