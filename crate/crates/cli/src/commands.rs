//! Subcommands. Each one computes everything first and then writes its
//! artifacts, so every file carries the final learning rate.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::SliceRandom;
use serde::Serialize;
use serde_json::{json, Value};
use youden_core::diagnostics::unit_grid;
use youden_core::rng::{derive, stream};
use youden_core::simulation::{CovariateStudyOptions, StudyOptions};
use youden_core::{
    bootstrap_intervals, calibrate, estimate_class_probs, minimize_multiclass, posterior_curve, prior_from_split,
    run_chain, run_covariate_study, run_study, summarize, youden_index_at, BSplineBasis, BetaPriorSpec,
    BootstrapResult, ClassProbs, ClassWeights, CredibleInterval, Dataset, GibbsPosterior, GpcTrace, OrderedNormalSpec,
    PosteriorChain, ProblemKind, ScenarioSpec,
};

use crate::config::{Command, PriorKind, ProbsMode, RunConfig};
use crate::ingest::{ingest_csv, rescale_covariate, IngestMode};
use crate::output::{fmt_float, Metadata, Writer, TOOL, VERSION};

const BOOTSTRAP_TAG: u64 = 1;
const GPC_TAG: u64 = 2;
const CHAIN_TAG: u64 = 3;
const SPLIT_TAG: u64 = 4;

/// Runs `command` on a thread pool of the configured size and returns the
/// files written.
pub fn run(command: Command, config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate(command)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.thread_count()).build()?;
    pool.install(|| match command {
        Command::FitMulticlass => fit_multiclass(config),
        Command::FitCovariate => fit_covariate(config),
        Command::Calibrate => calibrate_only(config),
        Command::Bootstrap => bootstrap_only(config),
        Command::Simulate => simulate(config),
        Command::PriorFromSplit => split_prior(config),
    })
}

fn metadata(command: Command, config: &RunConfig) -> Result<Metadata> {
    Ok(Metadata {
        tool: TOOL,
        version: VERSION,
        command: command.as_str().into(),
        config_hash: config.hash(command)?,
        seed: config.seed,
        threads: config.thread_count(),
        level: config.level,
        omega: None,
        prior: Value::Null,
        probs: Value::Null,
        covariate_range: None,
    })
}

fn warn(msgs: &[String]) {
    for m in msgs {
        eprintln!("warning: {m}");
    }
}

struct Loaded {
    dataset: Dataset,
    probs: ClassProbs,
    class_counts: Vec<usize>,
}

fn load(config: &RunConfig, kind: ProblemKind) -> Result<Loaded> {
    let mode = match (config.data.mode, kind) {
        (IngestMode::Auto, ProblemKind::Multiclass) => IngestMode::Multiclass,
        (IngestMode::Auto, ProblemKind::Covariate) => IngestMode::Covariate,
        (m, _) => m,
    };
    let input = config.input()?;
    let got = ingest_csv(input, mode, config.data.k).with_context(|| format!("reading {}", input.display()))?;
    warn(&got.warnings);
    if got.dataset.kind() != kind {
        bail!("input has {:?} data, command needs {:?}", got.dataset.kind(), kind);
    }
    let probs = probs_for(config, &got.dataset)?;
    Ok(Loaded { dataset: got.dataset, probs, class_counts: got.class_counts })
}

fn probs_for(config: &RunConfig, dataset: &Dataset) -> Result<ClassProbs> {
    Ok(match config.data.probs {
        ProbsMode::Estimated => estimate_class_probs(dataset)?,
        ProbsMode::Known => ClassProbs::known(config.data.probs_values.clone().expect("validated"))?,
    })
}

fn probs_value(config: &RunConfig, probs: &ClassProbs) -> Value {
    json!({ "mode": config.data.probs, "values": probs.values() })
}

/// Multi-class prior from the config; the vague prior is centred at
/// `theta_hat`.
fn multiclass_prior(config: &RunConfig, theta_hat: &[f64]) -> Result<(OrderedNormalSpec, Value)> {
    let p = &config.prior;
    let spec = match p.kind {
        PriorKind::Vague => OrderedNormalSpec::isotropic(theta_hat.to_vec(), p.vague_sd)?,
        PriorKind::Informative => {
            let mean = p.mean.clone().ok_or_else(|| anyhow!("informative prior needs prior.mean"))?;
            let sd = p.sd.clone().ok_or_else(|| anyhow!("informative prior needs prior.sd"))?;
            match sd.as_slice() {
                [s] => OrderedNormalSpec::isotropic(mean, *s)?,
                _ => OrderedNormalSpec::new(mean, sd)?,
            }
        }
        PriorKind::File => {
            let path = p.path.as_ref().ok_or_else(|| anyhow!("--prior file needs a prior path"))?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let body = doc.get("prior").cloned().unwrap_or(doc);
            serde_json::from_value(body).with_context(|| format!("prior in {}", path.display()))?
        }
    };
    if spec.dim() != theta_hat.len() {
        bail!("prior has {} cutoffs, data need {}", spec.dim(), theta_hat.len());
    }
    let value = json!({ "kind": p.kind, "mu": spec.mu(), "sigma": spec.sigma() });
    Ok((spec, value))
}

fn interval_rows(intervals: &[CredibleInterval]) -> Vec<Vec<String>> {
    intervals
        .iter()
        .enumerate()
        .map(|(j, iv)| {
            vec![
                format!("theta_{}", j + 1),
                fmt_float(iv.lower),
                fmt_float(iv.upper),
                fmt_float(iv.width()),
                fmt_float(iv.level),
            ]
        })
        .collect()
}

const INTERVAL_HEADER: [&str; 5] = ["parameter", "lower", "upper", "width", "level"];

fn chain_rows(chain: &PosteriorChain) -> Vec<Vec<String>> {
    let len = chain.chain_len();
    chain
        .draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut row = vec![(i / len).to_string(), (i % len).to_string()];
            row.extend(d.iter().map(|&v| fmt_float(v)));
            row
        })
        .collect()
}

fn chain_header(prefix: &str, dim: usize) -> Vec<String> {
    let mut h = vec!["chain".to_string(), "draw".to_string()];
    h.extend((1..=dim).map(|j| format!("{prefix}_{j}")));
    h
}

fn write_chain(w: &mut Writer, prefix: &str, chain: &PosteriorChain) -> Result<PathBuf> {
    let header = chain_header(prefix, chain.dim());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv("chain.csv", &header, &chain_rows(chain))
}

fn bounds(intervals: &[CredibleInterval]) -> Vec<[f64; 2]> {
    intervals.iter().map(|iv| [iv.lower, iv.upper]).collect()
}

#[derive(Serialize)]
struct TableRow {
    method: &'static str,
    estimate: Vec<f64>,
    intervals: Vec<[f64; 2]>,
    lengths: Vec<f64>,
}

fn fit_multiclass(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let command = Command::FitMulticlass;
    let data = load(config, ProblemKind::Multiclass)?;
    let ds = &data.dataset;
    let weights = ClassWeights::equal(ds.k());
    let est = minimize_multiclass(ds, &data.probs, &weights)?;
    let theta_hat = est.theta_hat.as_slice().to_vec();
    let youden = youden_index_at(&est.theta_hat, ds, &data.probs, &weights)?;
    let boot = bootstrap_intervals(
        ds,
        &data.probs,
        &weights,
        config.bootstrap.replicates,
        config.level,
        derive(config.seed, BOOTSTRAP_TAG),
    )?;
    let (prior, prior_value) = multiclass_prior(config, &theta_hat)?;
    let trace = match config.omega {
        Some(_) => None,
        None => {
            let gpc = youden_core::GpcConfig { level: config.level, seed: derive(config.seed, GPC_TAG), ..config.gpc.clone() };
            Some(calibrate(ds, &data.probs, &weights, &prior, &gpc, &config.nested_sampler)?)
        }
    };
    let omega = config.omega.or(trace.as_ref().map(|t| t.omega)).expect("fixed or calibrated");
    let post = GibbsPosterior::multiclass(ds, &data.probs, &weights, prior, omega)?;
    let chain = run_chain(&post, &config.sampler.clone().with_seed(derive(config.seed, CHAIN_TAG)))?;
    let summary = summarize(&chain, config.level)?;
    let mut warnings = chain.warnings.clone();
    warnings.extend(summary.warnings.iter().cloned());
    if let Some(t) = &trace {
        if !t.converged {
            warnings.push(format!("calibration did not converge; using omega = {}", t.omega));
        }
    }
    warn(&warnings);

    let mut meta = metadata(command, config)?;
    meta.omega = Some(omega);
    meta.prior = prior_value;
    meta.probs = probs_value(config, &data.probs);
    let mut w = Writer::new(&config.output, meta)?;
    w.json(
        "mestimate.json",
        &json!({
            "theta_hat": theta_hat,
            "risk": est.risk_value,
            "youden_index": youden,
            "candidates_examined": est.candidates_examined,
            "n": ds.len(),
            "class_counts": data.class_counts,
        }),
    )?;
    w.csv("bootstrap.csv", &INTERVAL_HEADER, &interval_rows(&boot.intervals))?;
    w.json("gpc_trace.json", &json!({ "calibrated": trace.is_some(), "omega": omega, "trace": trace }))?;
    write_chain(&mut w, "theta", &chain)?;
    let table = vec![
        TableRow {
            method: "bootstrap",
            estimate: theta_hat.clone(),
            intervals: bounds(&boot.intervals),
            lengths: boot.intervals.iter().map(CredibleInterval::width).collect(),
        },
        TableRow {
            method: "gibbs",
            estimate: summary.mean.clone(),
            intervals: bounds(&summary.intervals),
            lengths: summary.intervals.iter().map(CredibleInterval::width).collect(),
        },
    ];
    w.json(
        "summary.json",
        &json!({
            "n": ds.len(),
            "class_counts": data.class_counts,
            "table": table,
            "posterior": summary,
            "warnings": warnings,
        }),
    )?;
    Ok(w.into_written())
}

fn basis_for(config: &RunConfig) -> Result<BSplineBasis> {
    Ok(match &config.covariate.knots {
        Some(k) => BSplineBasis::new(k.clone())?,
        None => BSplineBasis::with_interior(&config.covariate.interior_knots)?,
    })
}

fn fit_covariate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let command = Command::FitCovariate;
    let mut data = load(config, ProblemKind::Covariate)?;
    let mut range = None;
    if config.data.rescale {
        let (ds, (lo, hi)) = rescale_covariate(&data.dataset)?;
        data.dataset = ds;
        range = Some([lo, hi]);
    }
    let ds = &data.dataset;
    let basis = basis_for(config)?;
    let x: Vec<f64> = ds.observations().iter().map(|o| o.x).collect();
    let prior = config.covariate.prior.clone().unwrap_or_else(|| BetaPriorSpec::flat_for_data(&x));
    let omega = config.covariate.omega;
    let post = GibbsPosterior::covariate(ds, &data.probs, &basis, prior.clone(), omega)?;
    let beta_hat = post.m_estimate()?;
    let risk = post.risk(&beta_hat);
    let chain = run_chain(&post, &config.sampler.clone().with_seed(derive(config.seed, CHAIN_TAG)))?;
    let summary = summarize(&chain, config.level)?;
    let z = unit_grid(config.covariate.grid_points);
    let curve = posterior_curve(&chain.draws, &basis, &z, config.level)?;
    let mut warnings = chain.warnings.clone();
    warnings.extend(summary.warnings.iter().cloned());
    warn(&warnings);

    let mut meta = metadata(command, config)?;
    meta.omega = Some(omega);
    meta.prior = serde_json::to_value(&prior)?;
    meta.probs = probs_value(config, &data.probs);
    meta.covariate_range = range;
    let mut w = Writer::new(&config.output, meta)?;
    w.json("beta_hat.json", &json!({ "beta_hat": beta_hat, "risk": risk, "knots": basis.knots() }))?;
    write_chain(&mut w, "beta", &chain)?;
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|p| {
            let mut row = vec![fmt_float(p.z)];
            if let Some([lo, hi]) = range {
                row.push(fmt_float(lo + p.z * (hi - lo)));
            }
            row.extend([fmt_float(p.mean), fmt_float(p.lower), fmt_float(p.upper)]);
            row
        })
        .collect();
    let header: &[&str] = if range.is_some() {
        &["z", "z_original", "mean", "lower", "upper"]
    } else {
        &["z", "mean", "lower", "upper"]
    };
    w.csv("curve.csv", header, &rows)?;
    w.json(
        "summary.json",
        &json!({
            "n": ds.len(),
            "class_counts": data.class_counts,
            "knots": basis.knots(),
            "beta_hat": beta_hat,
            "posterior": summary,
            "warnings": warnings,
        }),
    )?;
    Ok(w.into_written())
}

fn calibrate_only(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load(config, ProblemKind::Multiclass)?;
    let ds = &data.dataset;
    let weights = ClassWeights::equal(ds.k());
    let est = minimize_multiclass(ds, &data.probs, &weights)?;
    let (prior, prior_value) = multiclass_prior(config, est.theta_hat.as_slice())?;
    let gpc = youden_core::GpcConfig { level: config.level, seed: derive(config.seed, GPC_TAG), ..config.gpc.clone() };
    let trace: GpcTrace = calibrate(ds, &data.probs, &weights, &prior, &gpc, &config.nested_sampler)?;
    if !trace.converged {
        warn(&[format!("calibration did not converge; last omega = {}", trace.omega)]);
    }
    let mut meta = metadata(Command::Calibrate, config)?;
    meta.omega = Some(trace.omega);
    meta.prior = prior_value;
    meta.probs = probs_value(config, &data.probs);
    let mut w = Writer::new(&config.output, meta)?;
    w.json("gpc_trace.json", &json!({ "calibrated": true, "omega": trace.omega, "trace": trace }))?;
    Ok(w.into_written())
}

fn replicate_rows(boot: &BootstrapResult) -> Vec<Vec<String>> {
    boot.replicates
        .iter()
        .enumerate()
        .map(|(i, r)| std::iter::once(i.to_string()).chain(r.iter().map(|&v| fmt_float(v))).collect())
        .collect()
}

fn bootstrap_only(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load(config, ProblemKind::Multiclass)?;
    let ds = &data.dataset;
    let weights = ClassWeights::equal(ds.k());
    let boot = bootstrap_intervals(
        ds,
        &data.probs,
        &weights,
        config.bootstrap.replicates,
        config.level,
        derive(config.seed, BOOTSTRAP_TAG),
    )?;
    let mut meta = metadata(Command::Bootstrap, config)?;
    meta.probs = probs_value(config, &data.probs);
    let mut w = Writer::new(&config.output, meta)?;
    w.csv("bootstrap.csv", &INTERVAL_HEADER, &interval_rows(&boot.intervals))?;
    let mut header = vec!["replicate".to_string()];
    header.extend((1..=ds.k() - 1).map(|j| format!("theta_{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv("bootstrap_replicates.csv", &header, &replicate_rows(&boot))?;
    Ok(w.into_written())
}

fn simulate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let s = &config.simulate;
    let spec = ScenarioSpec { design: s.design, sd_override: s.sd_override, ..ScenarioSpec::new(s.scenario, s.n) };
    spec.validate()?;
    let mut meta = metadata(Command::Simulate, config)?;
    meta.probs = json!({ "design": s.design });
    if spec.id.is_covariate() {
        let opts = CovariateStudyOptions {
            basis: basis_for(config)?,
            sampler: config.sampler.clone(),
            learning_rate: config.covariate.omega,
            level: config.level,
            grid_points: config.covariate.grid_points,
            ..CovariateStudyOptions::default()
        };
        let r = run_covariate_study(&spec, s.reps, config.seed, &opts)?;
        warn(&r.failures);
        meta.omega = Some(config.covariate.omega);
        meta.prior = json!({ "kind": "flat", "bound": "10 max |x| per replicate" });
        let mut w = Writer::new(&config.output, meta)?;
        let rows: Vec<Vec<String>> = (0..r.z.len())
            .map(|i| {
                [r.z[i], r.truth[i], r.mean_curve[i], r.mean_lower[i], r.mean_upper[i]].iter().map(|&v| fmt_float(v)).collect()
            })
            .collect();
        w.csv("curve.csv", &["z", "truth", "mean", "lower", "upper"], &rows)?;
        w.json("study.json", &r)?;
        return Ok(w.into_written());
    }

    let opts: StudyOptions = s.study.clone();
    let r = run_study(&spec, &s.methods, s.reps, config.level, config.seed, &opts)?;
    for m in &r.methods {
        warn(&m.failures);
    }
    meta.prior = json!({
        "informative_sd": opts.informative_sd,
        "vague_sd": opts.vague_sd,
        "centre": r.truth,
    });
    let mut w = Writer::new(&config.output, meta)?;
    let dim = r.truth.len();
    let mut header = vec!["method".to_string()];
    for key in ["length", "length_se", "coverage", "coverage_se"] {
        header.extend((1..=dim).map(|j| format!("{key}_{j}")));
    }
    header.extend(["completed".to_string(), "failed".to_string()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = r
        .methods
        .iter()
        .map(|m| {
            let mut row = vec![m.method.as_str().to_string()];
            for v in [&m.mean_length, &m.length_se, &m.coverage, &m.coverage_se] {
                row.extend(v.iter().map(|&x| fmt_float(x)));
            }
            row.extend([m.completed.to_string(), m.failed.to_string()]);
            row
        })
        .collect();
    w.csv("table.csv", &header, &rows)?;
    w.json("study.json", &r)?;
    Ok(w.into_written())
}

fn split_prior(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = load(config, ProblemKind::Multiclass)?;
    let ds = &data.dataset;
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(derive(config.seed, SPLIT_TAG), 0));
    let m = ((n as f64) * config.split.fraction).round() as usize;
    let (prior_idx, rest_idx) = idx.split_at(m);
    let mut prior_idx = prior_idx.to_vec();
    let mut rest_idx = rest_idx.to_vec();
    prior_idx.sort_unstable();
    rest_idx.sort_unstable();
    let prior_ds = ds.select(&prior_idx);
    let rest_ds = ds.select(&rest_idx);
    for (name, part) in [("prior", &prior_ds), ("analysis", &rest_ds)] {
        part.ensure_valid().with_context(|| format!("{name} part of the split"))?;
    }
    let probs = probs_for(config, &prior_ds)?;
    let weights = ClassWeights::equal(ds.k());
    let split = prior_from_split(&prior_ds, &probs, &weights, config.bootstrap.replicates, derive(config.seed, BOOTSTRAP_TAG))?;
    if !split.floored.is_empty() {
        warn(&[format!("prior sd floored for cutoffs {:?}", split.floored)]);
    }
    let mut meta = metadata(Command::PriorFromSplit, config)?;
    meta.prior = json!({ "kind": "informative", "mu": split.prior.mu(), "sigma": split.prior.sigma() });
    meta.probs = probs_value(config, &probs);
    let mut w = Writer::new(&config.output, meta)?;
    w.json(
        "prior.json",
        &json!({
            "prior": split.prior,
            "intervals": split.bootstrap.intervals,
            "floored": split.floored,
            "prior_rows": prior_ds.len(),
            "analysis_rows": rest_ds.len(),
        }),
    )?;
    let rows: Vec<Vec<String>> =
        rest_ds.observations().iter().map(|o| vec![fmt_float(o.x), o.y.to_string()]).collect();
    w.csv("analysis.csv", &["x", "y"], &rows)?;
    Ok(w.into_written())
}
