//! Observations, datasets and the small value types shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two problem layouts a dataset follows.
///
/// Multi-class data carries labels `1..=k`; covariate-adjusted data carries
/// labels `-1` (healthy) and `+1` (diseased) plus a covariate `z` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Multiclass,
    Covariate,
}

impl ProblemKind {
    fn name(self) -> &'static str {
        match self {
            ProblemKind::Multiclass => "multiclass",
            ProblemKind::Covariate => "covariate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: i64,
    pub z: Option<f64>,
}

impl Observation {
    pub fn new(x: f64, y: i64) -> Self {
        Self { x, y, z: None }
    }

    pub fn with_covariate(x: f64, y: i64, z: f64) -> Self {
        Self { x, y, z: Some(z) }
    }
}

/// An immutable collection of labelled observations.
///
/// Labels are checked against the problem kind on construction; everything
/// else (empty classes, non-finite values, covariate range) is reported by
/// [`validate`] so that malformed files can be diagnosed rather than rejected
/// outright.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    classes: Vec<usize>,
    k: usize,
    kind: ProblemKind,
}

impl Dataset {
    pub fn multiclass(observations: Vec<Observation>, k: usize) -> Result<Self> {
        Self::new(observations, k, ProblemKind::Multiclass)
    }

    pub fn covariate(observations: Vec<Observation>) -> Result<Self> {
        Self::new(observations, 2, ProblemKind::Covariate)
    }

    pub fn new(observations: Vec<Observation>, k: usize, kind: ProblemKind) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidDataset(format!("need k >= 2 classes, got {k}")));
        }
        if kind == ProblemKind::Covariate && k != 2 {
            return Err(Error::InvalidDataset("covariate data has exactly two classes".into()));
        }
        let classes = observations
            .iter()
            .map(|o| class_index(o.y, k, kind))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { observations, classes, k, kind })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Zero-based class index of every observation; for covariate data
    /// `-1 -> 0` and `+1 -> 1`.
    pub fn class_indices(&self) -> &[usize] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &c in &self.classes {
            counts[c] += 1;
        }
        counts
    }

    /// Observations of class index `c`, in dataset order.
    pub fn class_values(&self, c: usize) -> Vec<f64> {
        self.observations
            .iter()
            .zip(&self.classes)
            .filter(|(_, &ci)| ci == c)
            .map(|(o, _)| o.x)
            .collect()
    }

    /// A new dataset made of the observations at `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            observations: indices.iter().map(|&i| self.observations[i]).collect(),
            classes: indices.iter().map(|&i| self.classes[i]).collect(),
            k: self.k,
            kind: self.kind,
        }
    }

    pub fn ensure_kind(&self, kind: ProblemKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::WrongKind(match kind {
                ProblemKind::Multiclass => "expected multiclass data",
                ProblemKind::Covariate => "expected covariate data",
            }))
        }
    }

    /// Fails with the first violation reported by [`validate`].
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate(self);
        if let Some(c) = report.empty_classes.first() {
            return Err(Error::EmptyClass(*c));
        }
        if let Some(v) = report.violations.first() {
            return Err(Error::InvalidDataset(v.clone()));
        }
        Ok(())
    }
}

fn class_index(y: i64, k: usize, kind: ProblemKind) -> Result<usize> {
    match kind {
        ProblemKind::Multiclass if y >= 1 && (y as usize) <= k => Ok(y as usize - 1),
        ProblemKind::Covariate if y == -1 => Ok(0),
        ProblemKind::Covariate if y == 1 => Ok(1),
        _ => Err(Error::InvalidLabel { label: y, kind: kind.name() }),
    }
}

/// External label for a zero-based class index.
pub fn class_label(c: usize, kind: ProblemKind) -> i64 {
    match kind {
        ProblemKind::Multiclass => c as i64 + 1,
        ProblemKind::Covariate => {
            if c == 0 {
                -1
            } else {
                1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    /// Counts indexed by zero-based class.
    pub class_counts: Vec<usize>,
    /// One-based class indices with no observations.
    pub empty_classes: Vec<usize>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.empty_classes.is_empty() && self.violations.is_empty()
    }
}

/// Checks the dataset invariants without failing.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let class_counts = dataset.class_counts();
    let mut violations = Vec::new();
    let mut empty_classes = Vec::new();
    for (c, &count) in class_counts.iter().enumerate() {
        if count == 0 {
            let label = class_label(c, dataset.kind);
            empty_classes.push(c + 1);
            violations.push(format!("class {label} empty"));
        }
    }
    if dataset.len() < dataset.k {
        violations.push(format!("n = {} is smaller than k = {}", dataset.len(), dataset.k));
    }
    for (i, o) in dataset.observations.iter().enumerate() {
        if !o.x.is_finite() {
            violations.push(format!("row {i}: x is not finite"));
        }
        match (dataset.kind, o.z) {
            (ProblemKind::Covariate, None) => violations.push(format!("row {i}: z missing")),
            (ProblemKind::Covariate, Some(z)) if !(0.0..=1.0).contains(&z) => {
                violations.push(format!("row {i}: z out of [0,1] ({z})"))
            }
            (ProblemKind::Multiclass, Some(_)) => {
                violations.push(format!("row {i}: unexpected z for multiclass data"))
            }
            _ => {}
        }
    }
    ValidationReport { n: dataset.len(), class_counts, empty_classes, violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbSource {
    /// Fixed by design (case-control).
    Known,
    /// Sample proportions (cohort).
    Estimated,
}

/// Class prevalences `p_1..p_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    values: Vec<f64>,
    source: ProbSource,
}

impl ClassProbs {
    pub fn known(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter("need at least two class probabilities".into()));
        }
        if values.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidParameter(format!("probabilities must lie in (0,1): {values:?}")));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { values, source: ProbSource::Known })
    }

    /// Equal prevalences `1/k`.
    pub fn uniform(k: usize) -> Self {
        Self { values: vec![1.0 / k as f64; k], source: ProbSource::Known }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> ProbSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Probabilities appropriate for a resample of the original data: known
    /// values are kept, estimated ones are recomputed.
    pub fn for_resample(&self, resample: &Dataset) -> Result<Self> {
        match self.source {
            ProbSource::Known => Ok(self.clone()),
            ProbSource::Estimated => estimate_class_probs(resample),
        }
    }
}

/// Sample proportions `n_j / n`.
pub fn estimate_class_probs(dataset: &Dataset) -> Result<ClassProbs> {
    let counts = dataset.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c + 1));
    }
    let n = dataset.len() as f64;
    let values = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(ClassProbs { values, source: ProbSource::Estimated })
}

/// Relative weights `w_j` of the two error types at each cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    values: Vec<f64>,
}

impl ClassWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return Err(Error::InvalidParameter(format!("weights must lie in (0,1): {values:?}")));
        }
        Ok(Self { values })
    }

    /// All weights `1/2` for `k` classes.
    pub fn equal(k: usize) -> Self {
        Self { values: vec![0.5; k.saturating_sub(1)] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Strictly increasing vector of cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CutoffVector(Vec<f64>);

impl CutoffVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || !is_strictly_increasing(&theta) {
            return Err(Error::UnorderedCutoffs(theta));
        }
        Ok(Self(theta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for CutoffVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CutoffVector> for Vec<f64> {
    fn from(c: CutoffVector) -> Self {
        c.0
    }
}

pub fn is_strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    BootstrapPercentile,
    GibbsQuantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl CredibleInterval {
    pub fn new(lower: f64, upper: f64, level: f64, method: IntervalMethod) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidParameter(format!("interval lower {lower} > upper {upper}")));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!("level {level} outside (0,1)")));
        }
        Ok(Self { lower, upper, level, method })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}
