//! Percentile bootstrap for the multi-class M-estimator, and the
//! prior-from-split rule used to build informative priors.
//!
//! Case-control data (known class probabilities) is resampled within each
//! class, so class sizes are preserved; cohort data (estimated
//! probabilities) is resampled as a whole and replicates that lose a class
//! are drawn again.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClassProbs, ClassWeights, CredibleInterval, Dataset, IntervalMethod, ProbSource};
use crate::error::{Error, Result};
use crate::mestimator::minimize_multiclass;
use crate::prior::OrderedNormalSpec;
use crate::rng::{stream, Rng as StreamRng};
use crate::stats::{order_statistic, sorted_copy};

pub const MIN_REPLICATES: usize = 100;
const MAX_REDRAWS: usize = 10_000;

/// Draws one resample; `None` if a class ended up empty.
pub fn resample_once<R: Rng + ?Sized>(dataset: &Dataset, stratified: bool, rng: &mut R) -> Option<Dataset> {
    let n = dataset.len();
    let indices: Vec<usize> = if stratified {
        let mut by_class = vec![Vec::new(); dataset.k()];
        for (i, &c) in dataset.class_indices().iter().enumerate() {
            by_class[c].push(i);
        }
        let mut out = Vec::with_capacity(n);
        for members in &by_class {
            for _ in 0..members.len() {
                out.push(members[rng.random_range(0..members.len())]);
            }
        }
        out
    } else {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    };
    let resampled = dataset.select(&indices);
    if resampled.class_counts().contains(&0) {
        None
    } else {
        Some(resampled)
    }
}

/// A resample with every class present, and the number of rejected draws.
pub fn resample<R: Rng + ?Sized>(dataset: &Dataset, source: ProbSource, rng: &mut R) -> Result<(Dataset, usize)> {
    let stratified = source == ProbSource::Known;
    for redraws in 0..MAX_REDRAWS {
        if let Some(d) = resample_once(dataset, stratified, rng) {
            return Ok((d, redraws));
        }
    }
    Err(Error::InvalidDataset(format!("no resample kept every class after {MAX_REDRAWS} draws")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `replicates[b][j]`: cutoff `j` re-estimated on resample `b`.
    pub replicates: Vec<Vec<f64>>,
    pub intervals: Vec<CredibleInterval>,
    pub level: f64,
    pub seed: u64,
    pub stratified: bool,
    /// Resamples discarded because a class was missing.
    pub redraws: usize,
}

impl BootstrapResult {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.replicates.iter().map(|r| r[j]).collect()
    }
}

/// Percentile intervals from `b` bootstrap re-estimates.
pub fn bootstrap_intervals(
    dataset: &Dataset,
    probs: &ClassProbs,
    weights: &ClassWeights,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    if b < MIN_REPLICATES {
        return Err(Error::InvalidParameter(format!("need at least {MIN_REPLICATES} bootstrap replicates, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level {level} outside (0,1)")));
    }
    dataset.ensure_valid()?;
    let draws: Vec<(Vec<f64>, usize)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng: StreamRng = stream(seed, i as u64);
            let (data, redraws) = resample(dataset, probs.source(), &mut rng)?;
            let p = probs.for_resample(&data)?;
            let est = minimize_multiclass(&data, &p, weights)?;
            Ok((est.theta_hat.into_inner(), redraws))
        })
        .collect::<Result<_>>()?;
    let redraws = draws.iter().map(|d| d.1).sum();
    let replicates: Vec<Vec<f64>> = draws.into_iter().map(|d| d.0).collect();
    let dim = replicates[0].len();
    let alpha = 1.0 - level;
    let intervals = (0..dim)
        .map(|j| {
            let col = sorted_copy(&replicates.iter().map(|r| r[j]).collect::<Vec<_>>());
            CredibleInterval::new(
                order_statistic(&col, alpha / 2.0),
                order_statistic(&col, 1.0 - alpha / 2.0),
                level,
                IntervalMethod::BootstrapPercentile,
            )
        })
        .collect::<Result<_>>()?;
    Ok(BootstrapResult {
        replicates,
        intervals,
        level,
        seed,
        stratified: probs.source() == ProbSource::Known,
        redraws,
    })
}

/// Informative ordered-normal prior from a held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPrior {
    pub prior: OrderedNormalSpec,
    pub bootstrap: BootstrapResult,
    /// Coordinates whose bootstrap interval had zero width.
    pub floored: Vec<usize>,
}

pub const PRIOR_SD_FLOOR: f64 = 1e-6;

/// Prior centred at the M-estimate on `prior_data` with standard deviations
/// one quarter of the 95% percentile-interval widths.
pub fn prior_from_split(
    prior_data: &Dataset,
    probs: &ClassProbs,
    weights: &ClassWeights,
    b: usize,
    seed: u64,
) -> Result<SplitPrior> {
    let est = minimize_multiclass(prior_data, probs, weights)?;
    let bootstrap = bootstrap_intervals(prior_data, probs, weights, b, 0.95, seed)?;
    let mut floored = Vec::new();
    let sigma = bootstrap
        .intervals
        .iter()
        .enumerate()
        .map(|(j, iv)| {
            let sd = iv.width() / 4.0;
            if sd < PRIOR_SD_FLOOR {
                floored.push(j);
                PRIOR_SD_FLOOR
            } else {
                sd
            }
        })
        .collect();
    let prior = OrderedNormalSpec::new(est.theta_hat.into_inner(), sigma)?;
    Ok(SplitPrior { prior, bootstrap, floored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{estimate_class_probs, Observation};

    fn gap_data() -> Dataset {
        let mut obs = Vec::new();
        for i in 0..30 {
            obs.push(Observation::new(i as f64 * 0.1, 1));
            obs.push(Observation::new(10.0 + i as f64 * 0.1, 2));
        }
        Dataset::multiclass(obs, 2).unwrap()
    }

    #[test]
    fn minimum_replicates() {
        let ds = gap_data();
        let p = ClassProbs::uniform(2);
        assert!(bootstrap_intervals(&ds, &p, &ClassWeights::equal(2), 99, 0.95, 1).is_err());
        assert!(prior_from_split(&ds, &p, &ClassWeights::equal(2), 50, 1).is_err());
    }

    #[test]
    fn replicates_stay_in_separation_gap() {
        let ds = gap_data();
        let p = ClassProbs::uniform(2);
        let r = bootstrap_intervals(&ds, &p, &ClassWeights::equal(2), 200, 0.95, 3).unwrap();
        assert!(r.stratified);
        assert_eq!(r.redraws, 0);
        for row in &r.replicates {
            assert!(row[0] > 2.9 && row[0] < 10.0);
        }
        assert!(r.intervals[0].width() <= 10.0 - 2.9);
    }

    #[test]
    fn percentile_endpoints_are_order_statistics() {
        let ds = gap_data();
        let p = estimate_class_probs(&ds).unwrap();
        let r = bootstrap_intervals(&ds, &p, &ClassWeights::equal(2), 1000, 0.95, 11).unwrap();
        assert!(!r.stratified);
        let col = sorted_copy(&r.column(0));
        assert_eq!(r.intervals[0].lower, col[24]);
        assert_eq!(r.intervals[0].upper, col[974]);
    }

    #[test]
    fn deterministic_for_seed() {
        let ds = gap_data();
        let p = ClassProbs::uniform(2);
        let a = bootstrap_intervals(&ds, &p, &ClassWeights::equal(2), 100, 0.9, 5).unwrap();
        let b = bootstrap_intervals(&ds, &p, &ClassWeights::equal(2), 100, 0.9, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_prior_sd_is_quarter_width() {
        let mut obs = Vec::new();
        for i in 0..40 {
            let u = i as f64 / 40.0;
            obs.push(Observation::new(u * 3.0, 1));
            obs.push(Observation::new(1.5 + u * 3.0, 2));
        }
        let ds = Dataset::multiclass(obs, 2).unwrap();
        let p = ClassProbs::uniform(2);
        let sp = prior_from_split(&ds, &p, &ClassWeights::equal(2), 400, 9).unwrap();
        let col = sorted_copy(&sp.bootstrap.column(0));
        let width = order_statistic(&col, 0.975) - order_statistic(&col, 0.025);
        assert_eq!(sp.prior.sigma()[0], width / 4.0);
        assert!(sp.floored.is_empty());
        let est = minimize_multiclass(&ds, &p, &ClassWeights::equal(2)).unwrap();
        assert_eq!(sp.prior.mu(), est.theta_hat.as_slice());
    }

    #[test]
    fn degenerate_width_is_floored() {
        // one observation per class: every stratified resample is identical
        let ds = Dataset::multiclass(vec![Observation::new(0.0, 1), Observation::new(1.0, 2)], 2).unwrap();
        let sp = prior_from_split(&ds, &ClassProbs::uniform(2), &ClassWeights::equal(2), 100, 1).unwrap();
        assert_eq!(sp.floored, vec![0]);
        assert_eq!(sp.prior.sigma()[0], PRIOR_SD_FLOOR);
    }
}
