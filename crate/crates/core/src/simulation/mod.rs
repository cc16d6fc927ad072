//! Simulation scenarios with known cutoffs: data generators, population
//! risks and truth solvers, and the Monte-Carlo study drivers.
//!
//! The multi-class scenarios have three classes with fixed outcome
//! distributions; the covariate scenarios have a healthy (`y = -1`) and a
//! diseased (`y = +1`) group whose outcome distribution depends on
//! `z ~ Uniform(0, 1)`.

mod study;

pub use study::{
    run_covariate_study, run_study, CovariateStudyOptions, CovariateStudyResult, Method, MethodResult,
    ReplicateRecord, StudyOptions, StudyResult,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::data::{ClassProbs, CutoffVector, Dataset, Observation, ProblemKind};
use crate::error::{Error, Result};
use crate::rng::stream;

/// A univariate outcome distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Component {
    Normal { mean: f64, sd: f64 },
    /// Shape and scale parametrization.
    Gamma { shape: f64, scale: f64 },
    StudentT { location: f64, scale: f64, df: f64 },
    Beta { a: f64, b: f64 },
    ChiSquared { df: f64 },
    Mixture { parts: Vec<(f64, Component)> },
}

fn bad(what: &str) -> Error {
    Error::InvalidParameter(format!("invalid {what} parameters"))
}

impl Component {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Component::Normal { mean, sd } => mean.is_finite() && *sd > 0.0 && sd.is_finite(),
            Component::Gamma { shape, scale } => *shape > 0.0 && *scale > 0.0,
            Component::StudentT { location, scale, df } => location.is_finite() && *scale > 0.0 && *df > 0.0,
            Component::Beta { a, b } => *a > 0.0 && *b > 0.0,
            Component::ChiSquared { df } => *df > 0.0,
            Component::Mixture { parts } => {
                for (_, c) in parts {
                    c.validate()?;
                }
                !parts.is_empty()
                    && parts.iter().all(|(w, _)| *w > 0.0)
                    && (parts.iter().map(|(w, _)| w).sum::<f64>() - 1.0).abs() < 1e-12
            }
        };
        if ok {
            Ok(())
        } else {
            Err(bad("distribution"))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Component::Normal { mean, sd } => statrs::distribution::Normal::new(*mean, *sd).map_or(f64::NAN, |d| d.cdf(x)),
            Component::Gamma { shape, scale } => {
                statrs::distribution::Gamma::new(*shape, 1.0 / scale).map_or(f64::NAN, |d| d.cdf(x.max(0.0)))
            }
            Component::StudentT { location, scale, df } => {
                statrs::distribution::StudentsT::new(*location, *scale, *df).map_or(f64::NAN, |d| d.cdf(x))
            }
            Component::Beta { a, b } => {
                statrs::distribution::Beta::new(*a, *b).map_or(f64::NAN, |d| d.cdf(x.clamp(0.0, 1.0)))
            }
            Component::ChiSquared { df } => {
                statrs::distribution::ChiSquared::new(*df).map_or(f64::NAN, |d| d.cdf(x.max(0.0)))
            }
            Component::Mixture { parts } => parts.iter().map(|(w, c)| w * c.cdf(x)).sum(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Component::Normal { mean, sd } => statrs::distribution::Normal::new(*mean, *sd).map_or(f64::NAN, |d| d.pdf(x)),
            Component::Gamma { shape, scale } => {
                statrs::distribution::Gamma::new(*shape, 1.0 / scale).map_or(f64::NAN, |d| d.pdf(x))
            }
            Component::StudentT { location, scale, df } => {
                statrs::distribution::StudentsT::new(*location, *scale, *df).map_or(f64::NAN, |d| d.pdf(x))
            }
            Component::Beta { a, b } => statrs::distribution::Beta::new(*a, *b).map_or(f64::NAN, |d| d.pdf(x)),
            Component::ChiSquared { df } => {
                if x <= 0.0 {
                    0.0
                } else {
                    statrs::distribution::ChiSquared::new(*df).map_or(f64::NAN, |d| d.pdf(x))
                }
            }
            Component::Mixture { parts } => parts.iter().map(|(w, c)| w * c.pdf(x)).sum(),
        }
    }

    /// Log density; stays finite far in the tails where `pdf` underflows.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Component::Normal { mean, sd } => {
                statrs::distribution::Normal::new(*mean, *sd).map_or(f64::NAN, |d| d.ln_pdf(x))
            }
            Component::StudentT { location, scale, df } => {
                statrs::distribution::StudentsT::new(*location, *scale, *df).map_or(f64::NAN, |d| d.ln_pdf(x))
            }
            Component::Mixture { parts } => {
                let logs: Vec<f64> = parts.iter().map(|(w, c)| w.ln() + c.ln_pdf(x)).collect();
                let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if top == f64::NEG_INFINITY {
                    top
                } else {
                    top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
                }
            }
            _ => self.pdf(x).ln(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(match self {
            Component::Normal { mean, sd } => rand_distr::Normal::new(*mean, *sd).map_err(|_| bad("normal"))?.sample(rng),
            Component::Gamma { shape, scale } => {
                rand_distr::Gamma::new(*shape, *scale).map_err(|_| bad("gamma"))?.sample(rng)
            }
            Component::StudentT { location, scale, df } => {
                location + scale * rand_distr::StudentT::new(*df).map_err(|_| bad("t"))?.sample(rng)
            }
            Component::Beta { a, b } => rand_distr::Beta::new(*a, *b).map_err(|_| bad("beta"))?.sample(rng),
            Component::ChiSquared { df } => rand_distr::ChiSquared::new(*df).map_err(|_| bad("chi-squared"))?.sample(rng),
            Component::Mixture { parts } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &parts[parts.len() - 1].1;
                for (w, c) in parts {
                    acc += w;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                chosen.sample(rng)?
            }
        })
    }

    /// Quantile by bisection on the CDF.
    pub fn quantile(&self, q: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.cdf(lo) > q {
            lo *= 2.0;
        }
        while self.cdf(hi) < q {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Mc1,
    Mc2,
    Mc3,
    Cov1,
    Cov2,
    Cov3,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] =
        [ScenarioId::Mc1, ScenarioId::Mc2, ScenarioId::Mc3, ScenarioId::Cov1, ScenarioId::Cov2, ScenarioId::Cov3];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Mc1 => "mc1",
            ScenarioId::Mc2 => "mc2",
            ScenarioId::Mc3 => "mc3",
            ScenarioId::Cov1 => "cov1",
            ScenarioId::Cov2 => "cov2",
            ScenarioId::Cov3 => "cov3",
        }
    }

    pub fn is_covariate(self) -> bool {
        matches!(self, ScenarioId::Cov1 | ScenarioId::Cov2 | ScenarioId::Cov3)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Exactly `n_per_group` observations per class; class probabilities known.
    CaseControl,
    /// Classes drawn uniformly at random; class probabilities estimated.
    Cohort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n_per_group: usize,
    pub design: Design,
    /// Replaces every outcome standard deviation (or t scale) of a covariate
    /// scenario; used for near-noiseless variants.
    pub sd_override: Option<f64>,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, n_per_group: usize) -> Self {
        Self { id, n_per_group, design: Design::CaseControl, sd_override: None }
    }

    pub fn k(&self) -> usize {
        if self.id.is_covariate() {
            2
        } else {
            3
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_group == 0 {
            return Err(Error::InvalidParameter("n_per_group must be positive".into()));
        }
        if let Some(sd) = self.sd_override {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::InvalidParameter(format!("sd override must be positive: {sd}")));
            }
        }
        Ok(())
    }

    /// Class outcome distributions of a multi-class scenario, lowest class first.
    pub fn components(&self) -> Result<Vec<Component>> {
        use Component::*;
        Ok(match self.id {
            ScenarioId::Mc1 => vec![
                Gamma { shape: 2.0, scale: 1.0 },
                Gamma { shape: 3.0, scale: 1.0 },
                Gamma { shape: 5.0, scale: 2.0 },
            ],
            ScenarioId::Mc2 => vec![
                Mixture { parts: vec![(0.5, Normal { mean: -1.5, sd: 0.5 }), (0.5, Normal { mean: 0.5, sd: 1.0 })] },
                Mixture { parts: vec![(0.5, Normal { mean: 1.0, sd: 1.0 }), (0.5, Normal { mean: 4.0, sd: 1.5 })] },
                Normal { mean: 5.0, sd: 2.0 },
            ],
            ScenarioId::Mc3 => vec![
                StudentT { location: 0.0, scale: 1.0, df: 2.0 },
                Beta { a: 2.0, b: 2.0 },
                ChiSquared { df: 1.0 },
            ],
            _ => return Err(Error::WrongKind("multiclass scenario")),
        })
    }

    /// Healthy and diseased outcome distributions at covariate `z`.
    pub fn conditional(&self, z: f64) -> Result<[Component; 2]> {
        use Component::*;
        let normal = |mean: f64, sd: f64| Normal { mean, sd: self.sd_override.unwrap_or(sd) };
        let t = |location: f64| StudentT { location, scale: self.sd_override.unwrap_or(1.0), df: 2.0 };
        let pi = std::f64::consts::PI;
        Ok(match self.id {
            ScenarioId::Cov1 => [normal(0.5 + z, 1.5), normal(2.0 + 4.0 * z, 2.0)],
            ScenarioId::Cov2 => {
                let phi = statrs::function::erf::erfc(-(10.0 * z - 2.0) / std::f64::consts::SQRT_2) / 2.0;
                [
                    normal(3.0 + 1.5 * (pi * z).sin(), 0.2 + z.exp()),
                    normal(5.0 + 1.5 * z + 1.5 * z.sin(), (1.5 + phi).sqrt()),
                ]
            }
            ScenarioId::Cov3 => [t(3.0 + 1.5 * (pi * z).sin()), t(5.0 + 1.5 * z + 1.5 * z.sin())],
            _ => return Err(Error::WrongKind("covariate scenario")),
        })
    }
}

/// A simulated dataset with the class probabilities its design implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub dataset: Dataset,
    pub probs: ClassProbs,
}

fn draw_classes<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Vec<usize> {
    let k = spec.k();
    match spec.design {
        Design::CaseControl => (0..k).flat_map(|c| std::iter::repeat_n(c, spec.n_per_group)).collect(),
        Design::Cohort => loop {
            let classes: Vec<usize> = (0..k * spec.n_per_group).map(|_| rng.random_range(0..k)).collect();
            if (0..k).all(|c| classes.contains(&c)) {
                break classes;
            }
        },
    }
}

pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Simulated> {
    spec.validate()?;
    let mut rng = stream(seed, 0);
    let classes = draw_classes(spec, &mut rng);
    let (dataset, k) = if spec.id.is_covariate() {
        let mut obs = Vec::with_capacity(classes.len());
        for &c in &classes {
            let z: f64 = rng.random();
            let x = spec.conditional(z)?[c].sample(&mut rng)?;
            obs.push(Observation::with_covariate(x, if c == 0 { -1 } else { 1 }, z));
        }
        (Dataset::new(obs, 2, ProblemKind::Covariate)?, 2)
    } else {
        let comps = spec.components()?;
        let mut obs = Vec::with_capacity(classes.len());
        for &c in &classes {
            obs.push(Observation::new(comps[c].sample(&mut rng)?, c as i64 + 1));
        }
        (Dataset::multiclass(obs, 3)?, 3)
    };
    let probs = match spec.design {
        Design::CaseControl => ClassProbs::uniform(k),
        Design::Cohort => crate::data::estimate_class_probs(&dataset)?,
    };
    Ok(Simulated { dataset, probs })
}

/// Population risk `sum_j F_{j+1}(theta_j) - F_j(theta_j)`.
pub fn population_risk(components: &[Component], theta: &[f64]) -> f64 {
    theta.iter().enumerate().map(|(j, &t)| components[j + 1].cdf(t) - components[j].cdf(t)).sum()
}

pub const TRUTH_GRID: usize = 20_001;

/// Minimizer of `F_upper - F_lower`: global grid search, then bisection on
/// the density difference inside the bracketing grid cells.
pub fn crossing_cutoff(lower: &Component, upper: &Component) -> Result<f64> {
    let lo = lower.quantile(1e-4).min(upper.quantile(1e-4));
    let hi = lower.quantile(1.0 - 1e-4).max(upper.quantile(1.0 - 1e-4));
    let h = (hi - lo) / (TRUTH_GRID - 1) as f64;
    let g = |x: f64| upper.cdf(x) - lower.cdf(x);
    let grid: Vec<f64> = (0..TRUTH_GRID).map(|i| lo + i as f64 * h).collect();
    let values: Vec<f64> = grid.iter().map(|&x| g(x)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < values[b] { i } else { b });
    // the minimizing set may be a plateau when the classes barely overlap
    let flat = |i: usize| values[i] <= values[best] + 1e-12;
    let mut first = best;
    while first > 0 && flat(first - 1) {
        first -= 1;
    }
    let mut last = best;
    while last + 1 < TRUTH_GRID && flat(last + 1) {
        last += 1;
    }
    let dump = || {
        let from = first.saturating_sub(3);
        let to = (last + 4).min(TRUTH_GRID);
        (from..to).map(|i| format!("({:.6}, {:.6e})", grid[i], values[i])).collect::<Vec<_>>().join(" ")
    };
    if first == 0 || last == TRUTH_GRID - 1 {
        return Err(Error::RootFinding(format!("risk minimized at the grid edge: {}", dump())));
    }
    // sign of f_upper - f_lower, compared on the log scale
    let diff = |x: f64| {
        let (u, l) = (upper.ln_pdf(x), lower.ln_pdf(x));
        if u == l {
            0.0
        } else {
            u - l
        }
    };
    let (mut a, mut b) = (grid[first - 1], grid[last + 1]);
    if !(diff(a) <= 0.0 && diff(b) >= 0.0) {
        return Err(Error::RootFinding(format!("no density crossing around the grid minimum: {}", dump())));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if diff(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= f64::EPSILON * m.abs().max(1.0) {
            break;
        }
    }
    let root = 0.5 * (a + b);
    Ok(if g(root) <= values[best] { root } else { grid[best] })
}

/// True cutoffs of a multi-class scenario.
pub fn true_cutoff(spec: &ScenarioSpec) -> Result<CutoffVector> {
    let comps = spec.components()?;
    let theta = comps.windows(2).map(|w| crossing_cutoff(&w[0], &w[1])).collect::<Result<Vec<_>>>()?;
    CutoffVector::new(theta)
}

/// True cutoff curve of a covariate scenario at each `z`.
pub fn true_curve(spec: &ScenarioSpec, z_grid: &[f64]) -> Result<Vec<f64>> {
    z_grid
        .iter()
        .map(|&z| {
            let [healthy, diseased] = spec.conditional(z)?;
            crossing_cutoff(&healthy, &diseased)
        })
        .collect()
}

/// Empirical check of `F_j >= F_{j+1}` on a grid from `n` draws per class:
/// returns `(x, j, excess)` for every grid point where `F̂_{j+1} - F̂_j`
/// exceeds `tol`.
pub fn ordering_violations(spec: &ScenarioSpec, n: usize, tol: f64, seed: u64) -> Result<Vec<(f64, usize, f64)>> {
    let big = ScenarioSpec { n_per_group: n, design: Design::CaseControl, ..spec.clone() };
    let comps = spec.components()?;
    let sim = generate(&big, seed)?;
    let samples: Vec<Vec<f64>> = (0..comps.len())
        .map(|c| crate::stats::sorted_copy(&sim.dataset.class_values(c)))
        .collect();
    let lo = comps.iter().map(|c| c.quantile(0.01)).fold(f64::INFINITY, f64::min);
    let hi = comps.iter().map(|c| c.quantile(0.99)).fold(f64::NEG_INFINITY, f64::max);
    let ecdf = |s: &[f64], x: f64| s.partition_point(|&v| v <= x) as f64 / s.len() as f64;
    let mut out = Vec::new();
    for i in 0..=200 {
        let x = lo + (hi - lo) * i as f64 / 200.0;
        for j in 0..comps.len() - 1 {
            let excess = ecdf(&samples[j + 1], x) - ecdf(&samples[j], x);
            if excess > tol {
                out.push((x, j, excess));
            }
        }
    }
    Ok(out)
}
