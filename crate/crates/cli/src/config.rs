//! Run configuration: a TOML file with one table per module, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use youden_core::simulation::{Design, StudyOptions};
use youden_core::{BetaPriorSpec, GpcConfig, Method, SamplerConfig, ScenarioId};

use crate::ingest::IngestMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FitMulticlass,
    FitCovariate,
    Calibrate,
    Bootstrap,
    Simulate,
    PriorFromSplit,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::FitMulticlass => "fit-multiclass",
            Command::FitCovariate => "fit-covariate",
            Command::Calibrate => "calibrate",
            Command::Bootstrap => "bootstrap",
            Command::Simulate => "simulate",
            Command::PriorFromSplit => "prior-from-split",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbsMode {
    #[default]
    Estimated,
    Known,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub mode: IngestMode,
    /// Number of classes; defaults to the largest label.
    pub k: Option<usize>,
    pub probs: ProbsMode,
    /// Class probabilities when `probs = "known"`.
    pub probs_values: Option<Vec<f64>>,
    /// Min-max rescale the covariate onto `[0, 1]`.
    pub rescale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Informative,
    #[default]
    Vague,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub kind: PriorKind,
    /// Informative prior location, one entry per cutoff.
    pub mean: Option<Vec<f64>>,
    /// Informative prior scale: one entry, or one per cutoff.
    pub sd: Option<Vec<f64>>,
    /// Scale of the vague prior, which is centred at the M-estimate.
    pub vague_sd: f64,
    /// JSON written by `prior-from-split`, or a bare `{mu, sigma}` object.
    pub path: Option<PathBuf>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { kind: PriorKind::Vague, mean: None, sd: None, vague_sd: 20.0, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateConfig {
    pub omega: f64,
    /// Full knot vector; overrides `interior_knots`.
    pub knots: Option<Vec<f64>>,
    /// Interior knots inside the default exterior pattern.
    pub interior_knots: Vec<f64>,
    pub grid_points: usize,
    /// Coefficient prior; flat with a data-scaled bound when absent.
    pub prior: Option<BetaPriorSpec>,
}

impl Default for CovariateConfig {
    fn default() -> Self {
        Self { omega: 1.0, knots: None, interior_knots: Vec::new(), grid_points: 200, prior: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: ScenarioId,
    pub n: usize,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub design: Design,
    pub sd_override: Option<f64>,
    pub study: StudyOptions,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioId::Mc1,
            n: 50,
            reps: 200,
            methods: Method::ALL.to_vec(),
            design: Design::CaseControl,
            sd_override: None,
            study: StudyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of the rows used to build the prior.
    pub fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 means all available cores.
    pub threads: usize,
    pub level: f64,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    /// Fixed learning rate for multi-class fits; calibrated when absent.
    pub omega: Option<f64>,
    pub data: DataConfig,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    /// Chains run inside each calibration step.
    pub nested_sampler: SamplerConfig,
    pub gpc: GpcConfig,
    pub bootstrap: BootstrapConfig,
    pub covariate: CovariateConfig,
    pub simulate: SimulateConfig,
    pub split: SplitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            level: 0.95,
            input: None,
            output: PathBuf::from("youden-out"),
            omega: None,
            data: DataConfig::default(),
            prior: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            nested_sampler: SamplerConfig::short(),
            gpc: GpcConfig::default(),
            bootstrap: BootstrapConfig::default(),
            covariate: CovariateConfig::default(),
            simulate: SimulateConfig::default(),
            split: SplitConfig::default(),
        }
    }
}

/// Command-line values that replace file values when present.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with columns x, y and optionally z.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Learning rate; skips calibration for multi-class fits.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Credible / confidence level.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_enum)]
    pub prior: Option<PriorKind>,
    /// Prior file for `--prior file`.
    #[arg(long)]
    pub prior_path: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<ScenarioId>,
    /// Observations per group for `simulate`.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated methods for `simulate`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Bootstrap replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Min-max rescale the covariate onto [0, 1].
    #[arg(long)]
    pub rescale: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// File values (or defaults) with the flags applied on top.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        c.apply(o);
        Ok(c)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.input {
            self.input = Some(v.clone());
        }
        if let Some(v) = &o.output {
            self.output = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
        if let Some(v) = o.omega {
            self.omega = Some(v);
            self.covariate.omega = v;
        }
        if let Some(v) = o.level {
            self.level = v;
        }
        if let Some(v) = o.prior {
            self.prior.kind = v;
        }
        if let Some(v) = &o.prior_path {
            self.prior.path = Some(v.clone());
        }
        if let Some(v) = o.scenario {
            self.simulate.scenario = v;
        }
        if let Some(v) = o.n {
            self.simulate.n = v;
        }
        if let Some(v) = o.reps {
            self.simulate.reps = v;
        }
        if let Some(v) = &o.methods {
            self.simulate.methods = v.clone();
        }
        if let Some(v) = o.replicates {
            self.bootstrap.replicates = v;
            self.simulate.study.bootstrap_replicates = v;
        }
        if o.rescale {
            self.data.rescale = true;
        }
    }

    pub fn input(&self) -> Result<&Path> {
        match &self.input {
            Some(p) => Ok(p),
            None => bail!("no input file: pass --input or set `input` in the config"),
        }
    }

    /// Effective worker count.
    pub fn thread_count(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Hash of everything that affects results; the output directory is
    /// left out so reruns elsewhere compare equal.
    pub fn hash(&self, command: Command) -> Result<String> {
        let mut c = self.clone();
        c.output = PathBuf::new();
        c.threads = self.thread_count();
        crate::output::config_hash(&(command, c))
    }

    pub fn validate(&self, command: Command) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            bail!("level {} outside (0, 1)", self.level);
        }
        if let Some(w) = self.omega {
            if !(w.is_finite() && w >= 0.0) {
                bail!("omega must be finite and non-negative, got {w}");
            }
        }
        if self.data.probs == ProbsMode::Known && self.data.probs_values.is_none() {
            bail!("data.probs = \"known\" needs data.probs_values");
        }
        if command == Command::PriorFromSplit && !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            bail!("split.fraction must lie in (0, 1), got {}", self.split.fraction);
        }
        if command == Command::FitCovariate && !(self.covariate.omega.is_finite() && self.covariate.omega >= 0.0) {
            bail!("covariate.omega must be finite and non-negative");
        }
        if command != Command::Simulate {
            self.input()?;
        }
        self.gpc.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::default().covariate.omega, 1.0);
        assert_eq!(RunConfig::default().covariate.grid_points, 200);
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml(
            r#"
            seed = 11
            level = 0.9
            [data]
            probs = "known"
            probs_values = [0.2, 0.3, 0.5]
            [prior]
            kind = "informative"
            mean = [1.0, 2.0]
            sd = [0.5]
            [sampler]
            iterations = 3000
            burn_in = 1000
            [gpc]
            replicates = 60
            [simulate]
            scenario = "mc3"
            methods = ["bootstrap", "gibbs-gpc-vague"]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.data.probs_values.as_deref(), Some(&[0.2, 0.3, 0.5][..]));
        assert_eq!(c.prior.kind, PriorKind::Informative);
        assert_eq!(c.sampler.iterations, 3000);
        assert_eq!(c.sampler.chains, SamplerConfig::default().chains);
        assert_eq!(c.gpc.replicates, 60);
        assert_eq!(c.gpc.max_iter, GpcConfig::default().max_iter);
        assert_eq!(c.simulate.scenario, ScenarioId::Mc3);
        assert_eq!(c.simulate.methods, vec![Method::Bootstrap, Method::GibbsGpcVague]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sead = 1").is_err());
        assert!(RunConfig::from_toml("[prior]\nmaen = [1.0]").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut c = RunConfig::from_toml("seed = 3\nlevel = 0.9").unwrap();
        c.apply(&Overrides { seed: Some(9), omega: Some(0.5), ..Default::default() });
        assert_eq!(c.seed, 9);
        assert_eq!(c.level, 0.9);
        assert_eq!(c.omega, Some(0.5));
        assert_eq!(c.covariate.omega, 0.5);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig { output: "a".into(), threads: 1, ..Default::default() };
        let b = RunConfig { output: "b".into(), threads: 1, ..Default::default() };
        assert_eq!(a.hash(Command::Simulate).unwrap(), b.hash(Command::Simulate).unwrap());
        let c = RunConfig { seed: 1, ..b };
        assert_ne!(a.hash(Command::Simulate).unwrap(), c.hash(Command::Simulate).unwrap());
        assert_ne!(a.hash(Command::Simulate).unwrap(), a.hash(Command::Bootstrap).unwrap());
    }
}
