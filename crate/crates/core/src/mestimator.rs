//! Exact and local minimization of the empirical risk.
//!
//! The multi-class risk is piecewise constant in each cutoff with jumps only
//! at observed values, so it is enough to decide which gap between
//! consecutive distinct data values each cutoff falls in. Gaps are indexed
//! `0..=m` for `m` distinct values `v_1 < ... < v_m`: gap 0 is below `v_1`,
//! gap `g` is `(v_g, v_{g+1})` and gap `m` is above `v_m`. Cutoffs must be
//! strictly increasing but several may share a gap, so the search runs over
//! non-decreasing gap tuples. A single cutoff in an interior gap sits at its
//! midpoint; cutoffs sharing a gap are spread evenly inside it.

use serde::{Deserialize, Serialize};

use crate::data::{ClassProbs, ClassWeights, CutoffVector, Dataset, ProblemKind};
use crate::error::{Error, Result};
use crate::objective::{covariate_risk, multiclass_risk, CovariateObjective};
use crate::spline::{BSplineBasis, SplineModel};
use crate::stats::{quantile_sorted, sorted_copy};

/// Relative tolerance used to call two candidate risks tied.
const TIE_TOL: f64 = 1e-12;
/// Smallest risk decrease accepted by the coordinate search; one
/// observation moves the risk by at least `1/n`.
const LINE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MEstimate {
    pub theta_hat: CutoffVector,
    pub risk_value: f64,
    pub candidates_examined: usize,
}

/// The gap structure of a sample: distinct sorted values and, for every
/// gap, the count of each class at or below its lower end.
#[derive(Debug, Clone)]
pub struct GapGrid {
    values: Vec<f64>,
    /// `counts[g][c]`: observations of class `c` with `x <= v_g` (`v_0 = -inf`).
    counts: Vec<Vec<u32>>,
    sentinel_step: f64,
}

impl GapGrid {
    pub fn new(dataset: &Dataset) -> Self {
        let k = dataset.k();
        let mut pairs: Vec<(f64, usize)> = dataset
            .observations()
            .iter()
            .zip(dataset.class_indices())
            .map(|(o, &c)| (o.x, c))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values = Vec::new();
        let mut counts = vec![vec![0u32; k]];
        let mut running = vec![0u32; k];
        let mut i = 0;
        while i < pairs.len() {
            let v = pairs[i].0;
            while i < pairs.len() && pairs[i].0 == v {
                running[pairs[i].1] += 1;
                i += 1;
            }
            values.push(v);
            counts.push(running.clone());
        }
        let m = values.len();
        let sentinel_step = if m > 1 { (values[m - 1] - values[0]) / (2.0 * (m - 1) as f64) } else { 0.5 };
        Self { values, counts, sentinel_step }
    }

    /// Number of gaps, `m + 1`.
    pub fn len(&self) -> usize {
        self.values.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Gap index of a real cutoff: the number of distinct values `<= t`.
    pub fn gap_of(&self, t: f64) -> usize {
        self.values.partition_point(|&v| v <= t)
    }

    pub fn count(&self, gap: usize, class: usize) -> u32 {
        self.counts[gap][class]
    }

    /// Representative point of the `rank`-th (1-based) of `share` cutoffs
    /// placed in `gap`.
    pub fn point(&self, gap: usize, rank: usize, share: usize) -> f64 {
        let m = self.values.len();
        let (r, s) = (rank as f64, share as f64);
        if gap == 0 {
            self.values[0] - self.sentinel_step * (s - r + 1.0)
        } else if gap == m {
            self.values[m - 1] + self.sentinel_step * r
        } else {
            let (a, b) = (self.values[gap - 1], self.values[gap]);
            a + (b - a) * r / (s + 1.0)
        }
    }

    /// Cutoff vector realizing a non-decreasing tuple of gaps.
    pub fn realize(&self, gaps: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(gaps.len());
        let mut i = 0;
        while i < gaps.len() {
            let mut j = i;
            while j < gaps.len() && gaps[j] == gaps[i] {
                j += 1;
            }
            let share = j - i;
            for r in 1..=share {
                out.push(self.point(gaps[i], r, share));
            }
            i = j;
        }
        out
    }
}

/// Global minimizer of the weighted multi-class risk.
///
/// Ties are broken towards the lexicographically smallest gap tuple.
/// Runs in `O(k m)` after sorting.
pub fn minimize_multiclass(
    dataset: &Dataset,
    probs: &ClassProbs,
    weights: &ClassWeights,
) -> Result<MEstimate> {
    dataset.ensure_kind(ProblemKind::Multiclass)?;
    dataset.ensure_valid()?;
    let k = dataset.k();
    if probs.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: probs.len() });
    }
    if weights.values().len() != k - 1 {
        return Err(Error::DimensionMismatch { expected: k - 1, got: weights.values().len() });
    }
    let grid = GapGrid::new(dataset);
    let gaps = best_gaps(&grid, dataset.len(), probs, weights);
    let theta_hat = CutoffVector::new(grid.realize(&gaps))?;
    let risk_value = multiclass_risk(&theta_hat, dataset, probs, weights)?;
    Ok(MEstimate { theta_hat, risk_value, candidates_examined: grid.len() * (k - 1) })
}

fn best_gaps(grid: &GapGrid, n: usize, probs: &ClassProbs, weights: &ClassWeights) -> Vec<usize> {
    let p = probs.values();
    let w = weights.values();
    let dim = w.len();
    let g = grid.len();
    let n = n as f64;
    let term = |j: usize, gap: usize| -> f64 {
        2.0 * (1.0 - w[j]) * grid.count(gap, j + 1) as f64 / (n * p[j + 1])
            - 2.0 * w[j] * grid.count(gap, j) as f64 / (n * p[j])
    };
    let scale: f64 = (0..dim).map(|j| 2.0 / (n * p[j]) + 2.0 / (n * p[j + 1])).sum::<f64>() * n;
    let tol = TIE_TOL * scale.max(1.0);

    // cost[j][gap]: best total of cutoffs j.. given cutoff j sits in `gap`.
    // tail[j][gap]: min over gap' >= gap of cost[j][gap'].
    let mut cost = vec![vec![0.0; g]; dim];
    let mut tail = vec![vec![0.0; g]; dim + 1];
    for j in (0..dim).rev() {
        for gap in 0..g {
            let rest = if j + 1 < dim { tail[j + 1][gap] } else { 0.0 };
            cost[j][gap] = term(j, gap) + rest;
        }
        let mut best = f64::INFINITY;
        for gap in (0..g).rev() {
            best = best.min(cost[j][gap]);
            tail[j][gap] = best;
        }
    }
    // smallest gap within tolerance of the optimum, coordinate by coordinate
    let mut out = Vec::with_capacity(dim);
    let mut from = 0;
    for j in 0..dim {
        let target = tail[j][from];
        let gap = (from..g).find(|&gap| cost[j][gap] <= target + tol).expect("minimum is attained");
        out.push(gap);
        from = gap;
    }
    out
}

/// Options for the covariate coordinate search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSearch {
    pub starts: usize,
    pub max_rounds: usize,
    /// `|beta_j| <= bound`; `None` means `10 max |x|`.
    pub bound: Option<f64>,
}

impl Default for CovariateSearch {
    fn default() -> Self {
        Self { starts: 10, max_rounds: 200, bound: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEstimate {
    pub beta_hat: Vec<f64>,
    pub risk_value: f64,
    pub candidates_examined: usize,
    pub converged: bool,
    pub rounds: usize,
}

/// Local minimizer of the covariate risk by exact coordinate-wise line
/// search, restarted from `init` and from constant curves at quantiles of
/// `x`. The best local optimum is returned.
pub fn minimize_covariate(
    dataset: &Dataset,
    probs: &ClassProbs,
    basis: &BSplineBasis,
    init: &[f64],
    search: &CovariateSearch,
) -> Result<CovariateEstimate> {
    dataset.ensure_kind(ProblemKind::Covariate)?;
    dataset.ensure_valid()?;
    let d = basis.dim();
    if init.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: init.len() });
    }
    let obj = CovariateObjective::new(dataset, probs, basis)?;
    let bound = search
        .bound
        .unwrap_or_else(|| 10.0 * obj.x().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-8));
    let xs = sorted_copy(obj.x());
    let mut starts = vec![init.to_vec()];
    let extra = search.starts.saturating_sub(1);
    for s in 0..extra {
        let q = (s as f64 + 1.0) / (extra as f64 + 1.0);
        starts.push(vec![quantile_sorted(&xs, q); d]);
    }

    let mut best: Option<CovariateEstimate> = None;
    let mut examined = 0;
    for start in starts {
        let start: Vec<f64> = start.iter().map(|b| b.clamp(-bound, bound)).collect();
        let run = coordinate_descent(&obj, start, bound, search.max_rounds);
        examined += run.candidates_examined;
        let better = match &best {
            None => true,
            Some(b) => run.risk_value < b.risk_value - TIE_TOL,
        };
        if better {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one start");
    best.candidates_examined = examined;
    let model = SplineModel::new(basis.clone(), best.beta_hat.clone())?;
    best.risk_value = covariate_risk(&model, dataset, probs)?;
    Ok(best)
}

fn coordinate_descent(obj: &CovariateObjective, mut beta: Vec<f64>, bound: f64, max_rounds: usize) -> CovariateEstimate {
    let d = beta.len();
    let mut fitted: Vec<f64> = (0..obj.n()).map(|i| obj.fitted(i, &beta)).collect();
    let mut examined = 0;
    let mut converged = false;
    let mut rounds = 0;
    while rounds < max_rounds {
        rounds += 1;
        let mut improved = false;
        for j in 0..d {
            let (value, count) = line_search(obj, &fitted, &beta, j, bound);
            examined += count;
            if let Some(v) = value {
                beta[j] = v;
                for &i in obj.support(j) {
                    fitted[i] = obj.fitted(i, &beta);
                }
                improved = true;
            }
        }
        if !improved {
            converged = true;
            break;
        }
    }
    let risk_value = (0..obj.n()).map(|i| obj.loss(i, fitted[i])).sum();
    CovariateEstimate { beta_hat: beta, risk_value, candidates_examined: examined, converged, rounds }
}

/// Best value of coordinate `j` with the others held fixed, if it strictly
/// improves on the current one.
fn line_search(
    obj: &CovariateObjective,
    fitted: &[f64],
    beta: &[f64],
    j: usize,
    bound: f64,
) -> (Option<f64>, usize) {
    let current = beta[j];
    // observation i is counted iff beta_j >= crit_i
    let mut crit: Vec<(f64, f64)> = obj
        .support(j)
        .iter()
        .map(|&i| {
            let b = obj.basis_value(i, j);
            let rest = fitted[i] - current * b;
            ((obj.x()[i] - rest) / b, obj.coef(i))
        })
        .collect();
    crit.sort_by(|a, b| a.0.total_cmp(&b.0));
    let risk_at = |v: f64| -> f64 { crit.iter().filter(|(c, _)| *c <= v).map(|(_, w)| w).sum() };
    let current_risk = risk_at(current);

    let mut best_val = None;
    let mut best_risk = current_risk;
    let mut prefix = 0.0;
    let mut examined = 1;
    let mut i = 0;
    // candidates: below all, between groups of equal critical values, above all
    let mut lower_edge = f64::NEG_INFINITY;
    loop {
        let upper_edge = if i < crit.len() { crit[i].0 } else { f64::INFINITY };
        let cand = match (lower_edge.is_finite(), upper_edge.is_finite()) {
            (false, true) => upper_edge - 1.0,
            (true, false) => lower_edge + 1.0,
            (true, true) => 0.5 * (lower_edge + upper_edge),
            (false, false) => current,
        }
        .clamp(-bound, bound);
        if cand >= lower_edge && cand < upper_edge {
            examined += 1;
            if prefix < best_risk - LINE_TOL {
                best_risk = prefix;
                best_val = Some(cand);
            }
        }
        if i >= crit.len() {
            break;
        }
        let v = crit[i].0;
        while i < crit.len() && crit[i].0 == v {
            prefix += crit[i].1;
            i += 1;
        }
        lower_edge = v;
    }
    (best_val, examined)
}
