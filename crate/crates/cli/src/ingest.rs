//! CSV input: a header row naming `x` and `y`, optionally `z`.
//!
//! Multi-class files use labels `1..=k`; covariate files use `-1` (healthy)
//! and `1` (diseased) and need a `z` column. Missing values (`NA`, empty
//! cells, `NaN`) are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use youden_core::{Dataset, Observation, ProblemKind};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("line {line}: missing value in column {column:?}")]
    MissingValue { line: u64, column: &'static str },
    #[error("line {line}: cannot parse {value:?} in column {column:?}")]
    Parse { line: u64, column: &'static str, value: String },
    #[error("line {line}: label {label} not allowed for {kind} data")]
    Label { line: u64, label: i64, kind: &'static str },
    #[error("no data rows")]
    Empty,
    #[error(transparent)]
    Data(#[from] youden_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestMode {
    /// Covariate when a `z` column is present, multi-class otherwise.
    #[default]
    Auto,
    Multiclass,
    Covariate,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub class_counts: Vec<usize>,
    pub warnings: Vec<String>,
}

const MISSING: [&str; 4] = ["", "NA", "NaN", "nan"];

fn cell<'a>(rec: &'a csv::StringRecord, idx: usize, line: u64, column: &'static str) -> Result<&'a str, IngestError> {
    let v = rec.get(idx).map(str::trim).unwrap_or("");
    if MISSING.contains(&v) {
        Err(IngestError::MissingValue { line, column })
    } else {
        Ok(v)
    }
}

fn number(rec: &csv::StringRecord, idx: usize, line: u64, column: &'static str) -> Result<f64, IngestError> {
    let v = cell(rec, idx, line, column)?;
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(IngestError::Parse { line, column, value: v.to_string() }),
    }
}

/// Reads a dataset; `k` fixes the number of classes of a multi-class file
/// (otherwise the largest label).
pub fn ingest_csv(path: &Path, mode: IngestMode, k: Option<usize>) -> Result<Ingested, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(file);
    let headers = reader.headers().map_err(|source| IngestError::Csv { line: 1, source })?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let xi = find("x").ok_or(IngestError::MissingColumn("x"))?;
    let yi = find("y").ok_or(IngestError::MissingColumn("y"))?;
    let zi = find("z");
    let mut warnings: Vec<String> = headers
        .iter()
        .filter(|h| !["x", "y", "z"].contains(h))
        .map(|h| format!("ignoring unknown column {h:?}"))
        .collect();
    let kind = match mode {
        IngestMode::Auto if zi.is_some() => ProblemKind::Covariate,
        IngestMode::Auto | IngestMode::Multiclass => ProblemKind::Multiclass,
        IngestMode::Covariate => ProblemKind::Covariate,
    };
    if kind == ProblemKind::Covariate && zi.is_none() {
        return Err(IngestError::MissingColumn("z"));
    }
    if kind == ProblemKind::Multiclass && zi.is_some() {
        warnings.push("column \"z\" ignored for multi-class data".into());
    }

    let mut obs = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| {
            let line = source.position().map_or(0, |p| p.line());
            IngestError::Csv { line, source }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let x = number(&rec, xi, line, "x")?;
        let raw = cell(&rec, yi, line, "y")?;
        let y: i64 = raw.parse().map_err(|_| IngestError::Parse { line, column: "y", value: raw.to_string() })?;
        match kind {
            ProblemKind::Multiclass => {
                if y < 1 || k.is_some_and(|k| y as usize > k) {
                    return Err(IngestError::Label { line, label: y, kind: "multi-class" });
                }
                obs.push(Observation::new(x, y));
            }
            ProblemKind::Covariate => {
                if y != 1 && y != -1 {
                    return Err(IngestError::Label { line, label: y, kind: "covariate" });
                }
                let z = number(&rec, zi.expect("checked above"), line, "z")?;
                obs.push(Observation::with_covariate(x, y, z));
            }
        }
    }
    if obs.is_empty() {
        return Err(IngestError::Empty);
    }
    let dataset = match kind {
        ProblemKind::Multiclass => {
            let k = k.unwrap_or_else(|| obs.iter().map(|o| o.y).max().unwrap_or(1) as usize);
            Dataset::multiclass(obs, k)?
        }
        ProblemKind::Covariate => Dataset::covariate(obs)?,
    };
    let class_counts = dataset.class_counts();
    Ok(Ingested { dataset, class_counts, warnings })
}

/// Min-max rescaling of the covariate onto `[0, 1]`; returns the new dataset
/// and the original `(min, max)`.
pub fn rescale_covariate(dataset: &Dataset) -> Result<(Dataset, (f64, f64)), youden_core::Error> {
    dataset.ensure_kind(ProblemKind::Covariate)?;
    let zs: Vec<f64> = dataset.observations().iter().filter_map(|o| o.z).collect();
    let lo = zs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(youden_core::Error::InvalidDataset("covariate is constant; cannot rescale".into()));
    }
    let obs = dataset
        .observations()
        .iter()
        .map(|o| Observation::with_covariate(o.x, o.y, ((o.z.unwrap_or(lo) - lo) / (hi - lo)).clamp(0.0, 1.0)))
        .collect();
    Ok((Dataset::covariate(obs)?, (lo, hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn tmt_shaped_counts() {
        let mut text = String::from("x,y\n");
        for (label, n) in [(1, 170), (2, 52), (3, 23)] {
            for i in 0..n {
                text.push_str(&format!("{},{}\n", 20.0 + label as f64 * 15.0 + i as f64 * 0.1, label));
            }
        }
        let got = ingest_csv(file(&text).path(), IngestMode::Auto, None).unwrap();
        assert_eq!(got.class_counts, vec![170, 52, 23]);
        assert_eq!(got.dataset.len(), 245);
        assert_eq!(got.dataset.kind(), ProblemKind::Multiclass);
    }

    #[test]
    fn covariate_file() {
        let got = ingest_csv(file("x,y,z\n1.0,-1,0.2\n2.0,1,0.9\n").path(), IngestMode::Auto, None).unwrap();
        assert_eq!(got.dataset.kind(), ProblemKind::Covariate);
        assert_eq!(got.class_counts, vec![1, 1]);
    }

    #[test]
    fn zero_label_rejected() {
        let err = ingest_csv(file("x,y\n1.0,1\n2.0,0\n").path(), IngestMode::Multiclass, None).unwrap_err();
        assert!(matches!(err, IngestError::Label { line: 3, label: 0, .. }), "{err}");
    }

    #[test]
    fn na_rejected_with_line() {
        let err = ingest_csv(file("x,y\n1.0,1\nNA,2\n").path(), IngestMode::Auto, None).unwrap_err();
        assert!(matches!(err, IngestError::MissingValue { line: 3, column: "x" }), "{err}");
        let err = ingest_csv(file("x,y\n1.0,1\nabc,2\n").path(), IngestMode::Auto, None).unwrap_err();
        assert_eq!(err.to_string(), "line 3: cannot parse \"abc\" in column \"x\"");
    }

    #[test]
    fn unknown_columns_warned() {
        let got = ingest_csv(file("id,x,y\n7,1.0,1\n8,2.0,2\n").path(), IngestMode::Auto, None).unwrap();
        assert_eq!(got.warnings, vec!["ignoring unknown column \"id\"".to_string()]);
    }

    #[test]
    fn missing_columns() {
        assert!(matches!(
            ingest_csv(file("x,label\n1,1\n").path(), IngestMode::Auto, None),
            Err(IngestError::MissingColumn("y"))
        ));
        assert!(matches!(
            ingest_csv(file("x,y\n1,1\n").path(), IngestMode::Covariate, None),
            Err(IngestError::MissingColumn("z"))
        ));
    }

    #[test]
    fn rescale_maps_to_unit_interval() {
        let got = ingest_csv(file("x,y,z\n1,-1,20\n2,1,89\n3,1,50\n").path(), IngestMode::Auto, None).unwrap();
        let (ds, range) = rescale_covariate(&got.dataset).unwrap();
        assert_eq!(range, (20.0, 89.0));
        let z: Vec<f64> = ds.observations().iter().map(|o| o.z.unwrap()).collect();
        assert_eq!(z[0], 0.0);
        assert_eq!(z[1], 1.0);
        assert!((z[2] - 30.0 / 69.0).abs() < 1e-15);
    }
}
