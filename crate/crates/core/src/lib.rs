//! Gibbs-posterior inference for Youden-index cutoffs.
//!
//! Multi-class cutoffs are estimated by exact empirical-risk minimization,
//! bootstrapped, and given a Gibbs posterior whose learning rate can be
//! calibrated for frequentist coverage. Covariate-adjusted cutoff curves use
//! a cubic B-spline basis.

pub mod bootstrap;
pub mod calibration;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod mestimator;
pub mod objective;
pub mod prior;
pub mod rng;
pub mod sampler;
pub mod simulation;
pub mod spline;
pub mod stats;

pub use bootstrap::{bootstrap_intervals, prior_from_split, BootstrapResult, SplitPrior};
pub use data::{
    estimate_class_probs, validate, ClassProbs, ClassWeights, CredibleInterval, CutoffVector, Dataset,
    IntervalMethod, Observation, ProbSource, ProblemKind, ValidationReport,
};
pub use error::{Error, Result};
pub use mestimator::{minimize_covariate, minimize_multiclass, CovariateEstimate, CovariateSearch, MEstimate};
pub use objective::{covariate_risk, multiclass_risk, youden_index_at, CovariateObjective, MulticlassObjective};
pub use prior::{BetaPriorKind, BetaPriorSpec, OrderedNormalSpec};
pub use sampler::{log_pseudo_posterior, run_chain, GibbsPosterior, InitStrategy, PosteriorChain, SamplerConfig};
pub use spline::{bspline_eval, BSplineBasis, SplineModel};
pub use calibration::{calibrate, estimate_coverage, CoverageMode, GpcConfig, GpcTrace};
pub use diagnostics::{posterior_curve, summarize, CurvePoint, PosteriorSummary};
pub use simulation::{generate, run_covariate_study, run_study, true_cutoff, Method, ScenarioId, ScenarioSpec, StudyResult};
