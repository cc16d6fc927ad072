//! Empirical risks for multi-class and covariate-adjusted cutoffs.
//!
//! The weighted multi-class risk is
//!
//! ```text
//! R_n(theta) = (2/n) sum_i sum_j [ (1-w_j) 1(x_i <= theta_j, y_i = j+1) / p_{j+1}
//!                                  -  w_j  1(x_i <= theta_j, y_i = j)   / p_j ]
//! ```
//!
//! so that equal weights `w_j = 1/2` give the unweighted objective exactly.
//! Ties use `x_i <= theta_j`.
//!
//! [`multiclass_risk`] and [`covariate_risk`] are direct transcriptions used
//! for reporting. [`MulticlassObjective`] and [`CovariateObjective`] hold
//! precomputed per-class order statistics and basis rows for the samplers.

use crate::data::{ClassProbs, ClassWeights, CutoffVector, Dataset, ProblemKind};
use crate::error::{Error, Result};
use crate::spline::{BSplineBasis, SplineModel, ORDER};

fn check_multiclass(
    theta: &[f64],
    dataset: &Dataset,
    probs: &ClassProbs,
    weights: &ClassWeights,
) -> Result<()> {
    dataset.ensure_kind(ProblemKind::Multiclass)?;
    let k = dataset.k();
    if theta.len() != k - 1 {
        return Err(Error::DimensionMismatch { expected: k - 1, got: theta.len() });
    }
    if probs.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: probs.len() });
    }
    if weights.values().len() != k - 1 {
        return Err(Error::DimensionMismatch { expected: k - 1, got: weights.values().len() });
    }
    Ok(())
}

/// Weighted empirical risk of an ordered cutoff vector.
pub fn multiclass_risk(
    theta: &CutoffVector,
    dataset: &Dataset,
    probs: &ClassProbs,
    weights: &ClassWeights,
) -> Result<f64> {
    let theta = theta.as_slice();
    check_multiclass(theta, dataset, probs, weights)?;
    let p = probs.values();
    let w = weights.values();
    let mut total = 0.0;
    for (o, &c) in dataset.observations().iter().zip(dataset.class_indices()) {
        for (j, &t) in theta.iter().enumerate() {
            if o.x <= t {
                if c == j + 1 {
                    total += 2.0 * (1.0 - w[j]) / p[j + 1];
                } else if c == j {
                    total -= 2.0 * w[j] / p[j];
                }
            }
        }
    }
    Ok(total / dataset.len() as f64)
}

/// Empirical Youden index at `theta`: the negated weighted risk.
pub fn youden_index_at(
    theta: &CutoffVector,
    dataset: &Dataset,
    probs: &ClassProbs,
    weights: &ClassWeights,
) -> Result<f64> {
    multiclass_risk(theta, dataset, probs, weights).map(|r| -r)
}

/// Empirical risk of a cutoff curve on covariate data.
pub fn covariate_risk(model: &SplineModel, dataset: &Dataset, probs: &ClassProbs) -> Result<f64> {
    dataset.ensure_kind(ProblemKind::Covariate)?;
    let p = probs.values();
    let mut total = 0.0;
    for (i, (o, &c)) in dataset.observations().iter().zip(dataset.class_indices()).enumerate() {
        let z = o.z.ok_or(Error::MissingCovariate(i))?;
        if o.x <= model.eval(z)? {
            if c == 1 {
                total += 1.0 / p[1];
            } else {
                total -= 1.0 / p[0];
            }
        }
    }
    Ok(total / dataset.len() as f64)
}

/// Multi-class risk with sorted per-class values; each cutoff's term costs
/// two binary searches.
#[derive(Debug, Clone)]
pub struct MulticlassObjective {
    sorted: Vec<Vec<f64>>,
    /// `2 (1 - w_j) / (n p_{j+1})` and `2 w_j / (n p_j)`.
    upper_coef: Vec<f64>,
    lower_coef: Vec<f64>,
    n: usize,
}

impl MulticlassObjective {
    pub fn new(dataset: &Dataset, probs: &ClassProbs, weights: &ClassWeights) -> Result<Self> {
        dataset.ensure_kind(ProblemKind::Multiclass)?;
        let k = dataset.k();
        check_multiclass(&vec![0.0; k - 1], dataset, probs, weights)?;
        let sorted = (0..k)
            .map(|c| {
                let mut v = dataset.class_values(c);
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        let n = dataset.len() as f64;
        let p = probs.values();
        let w = weights.values();
        let upper_coef = (0..k - 1).map(|j| 2.0 * (1.0 - w[j]) / (n * p[j + 1])).collect();
        let lower_coef = (0..k - 1).map(|j| 2.0 * w[j] / (n * p[j])).collect();
        Ok(Self { sorted, upper_coef, lower_coef, n: dataset.len() })
    }

    pub fn dim(&self) -> usize {
        self.sorted.len() - 1
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn count_le(&self, c: usize, t: f64) -> usize {
        self.sorted[c].partition_point(|&x| x <= t)
    }

    /// Contribution of cutoff `j` placed at `t`.
    pub fn term(&self, j: usize, t: f64) -> f64 {
        self.upper_coef[j] * self.count_le(j + 1, t) as f64
            - self.lower_coef[j] * self.count_le(j, t) as f64
    }

    pub fn risk(&self, theta: &[f64]) -> f64 {
        theta.iter().enumerate().map(|(j, &t)| self.term(j, t)).sum()
    }
}

/// Covariate risk with precomputed sparse basis rows.
#[derive(Debug, Clone)]
pub struct CovariateObjective {
    basis: BSplineBasis,
    x: Vec<f64>,
    /// `+1/(n p_1)` for diseased, `-1/(n p_{-1})` for healthy.
    coef: Vec<f64>,
    first: Vec<usize>,
    rows: Vec<[f64; ORDER]>,
    /// Observations whose row is non-zero in each coordinate.
    support: Vec<Vec<usize>>,
}

impl CovariateObjective {
    pub fn new(dataset: &Dataset, probs: &ClassProbs, basis: &BSplineBasis) -> Result<Self> {
        dataset.ensure_kind(ProblemKind::Covariate)?;
        let n = dataset.len() as f64;
        let p = probs.values();
        let mut x = Vec::with_capacity(dataset.len());
        let mut coef = Vec::with_capacity(dataset.len());
        let mut first = Vec::with_capacity(dataset.len());
        let mut rows = Vec::with_capacity(dataset.len());
        let mut support = vec![Vec::new(); basis.dim()];
        for (i, (o, &c)) in dataset.observations().iter().zip(dataset.class_indices()).enumerate() {
            let z = o.z.ok_or(Error::MissingCovariate(i))?;
            let (f, vals) = basis.nonzero(z)?;
            for (r, v) in vals.iter().enumerate() {
                if *v != 0.0 {
                    support[f + r].push(i);
                }
            }
            x.push(o.x);
            coef.push(if c == 1 { 1.0 / (n * p[1]) } else { -1.0 / (n * p[0]) });
            first.push(f);
            rows.push(vals);
        }
        Ok(Self { basis: basis.clone(), x, coef, first, rows, support })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// `theta(z_i)` for observation `i`.
    pub fn fitted(&self, i: usize, beta: &[f64]) -> f64 {
        let f = self.first[i];
        self.rows[i].iter().enumerate().map(|(r, v)| v * beta[f + r]).sum()
    }

    /// Basis value of coordinate `j` at observation `i`.
    pub fn basis_value(&self, i: usize, j: usize) -> f64 {
        let f = self.first[i];
        if j >= f && j < f + ORDER {
            self.rows[i][j - f]
        } else {
            0.0
        }
    }

    pub fn support(&self, j: usize) -> &[usize] {
        &self.support[j]
    }

    pub fn coef(&self, i: usize) -> f64 {
        self.coef[i]
    }

    /// Contribution of observation `i` when the curve passes through `fitted`.
    pub fn loss(&self, i: usize, fitted: f64) -> f64 {
        if self.x[i] <= fitted {
            self.coef[i]
        } else {
            0.0
        }
    }

    pub fn risk(&self, beta: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.loss(i, self.fitted(i, beta))).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn two_point() -> (Dataset, ClassProbs, ClassWeights) {
        let ds = Dataset::multiclass(vec![Observation::new(1.0, 1), Observation::new(3.0, 2)], 2).unwrap();
        (ds, ClassProbs::known(vec![0.5, 0.5]).unwrap(), ClassWeights::equal(2))
    }

    fn cv(v: &[f64]) -> CutoffVector {
        CutoffVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn hand_evaluated_examples() {
        let (ds, p, w) = two_point();
        assert_eq!(multiclass_risk(&cv(&[2.0]), &ds, &p, &w).unwrap(), -1.0);
        assert_eq!(multiclass_risk(&cv(&[0.0]), &ds, &p, &w).unwrap(), 0.0);
        assert_eq!(multiclass_risk(&cv(&[4.0]), &ds, &p, &w).unwrap(), 0.0);
    }

    #[test]
    fn youden_sign_and_separation() {
        let (ds, p, w) = two_point();
        for t in [0.0, 2.0, 4.0] {
            let r = multiclass_risk(&cv(&[t]), &ds, &p, &w).unwrap();
            assert_eq!(youden_index_at(&cv(&[t]), &ds, &p, &w).unwrap(), -r);
        }
        assert_eq!(youden_index_at(&cv(&[-5.0]), &ds, &p, &w).unwrap(), 0.0);
        // separated classes with estimated p: sensitivity + specificity - 1 = 1
        let obs = vec![
            Observation::new(0.1, 1),
            Observation::new(0.4, 1),
            Observation::new(0.2, 1),
            Observation::new(1.5, 2),
            Observation::new(2.5, 2),
        ];
        let ds = Dataset::multiclass(obs, 2).unwrap();
        let p = crate::data::estimate_class_probs(&ds).unwrap();
        let yi = youden_index_at(&cv(&[1.0]), &ds, &p, &w).unwrap();
        assert!((yi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let (ds, p, w) = two_point();
        assert!(matches!(
            multiclass_risk(&cv(&[1.0, 2.0]), &ds, &p, &w),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fast_objective_matches_literal() {
        let obs = [(0.3, 1), (1.2, 2), (0.9, 1), (2.0, 3), (1.1, 2), (1.9, 3), (0.5, 2)]
            .iter()
            .map(|&(x, y)| Observation::new(x, y))
            .collect();
        let ds = Dataset::multiclass(obs, 3).unwrap();
        let p = crate::data::estimate_class_probs(&ds).unwrap();
        let w = ClassWeights::new(vec![0.3, 0.6]).unwrap();
        let fast = MulticlassObjective::new(&ds, &p, &w).unwrap();
        for a in [-1.0, 0.3, 0.7, 1.15, 1.5] {
            for b in [1.2, 1.6, 1.9, 3.0] {
                if a < b {
                    let lit = multiclass_risk(&cv(&[a, b]), &ds, &p, &w).unwrap();
                    assert!((fast.risk(&[a, b]) - lit).abs() < 1e-12);
                }
            }
        }
    }

    fn covariate_toy() -> Dataset {
        let rows = [(0.15, -1, 0.1), (1.4, 1, 0.3), (0.8, -1, 0.5), (2.2, 1, 0.9), (1.0, 1, 0.7)];
        Dataset::covariate(rows.iter().map(|&(x, y, z)| Observation::with_covariate(x, y, z)).collect())
            .unwrap()
    }

    #[test]
    fn constant_curve_reduces_to_two_class_risk() {
        let ds = covariate_toy();
        let p = crate::data::estimate_class_probs(&ds).unwrap();
        let as_mc = Dataset::multiclass(
            ds.observations().iter().map(|o| Observation::new(o.x, if o.y < 0 { 1 } else { 2 })).collect(),
            2,
        )
        .unwrap();
        let w = ClassWeights::equal(2);
        for c in [-1.0, 0.5, 0.9, 1.2, 1.8, 3.0] {
            let m = SplineModel::constant(BSplineBasis::default_cubic(), c);
            let cov = covariate_risk(&m, &ds, &p).unwrap();
            let mc = multiclass_risk(&cv(&[c]), &as_mc, &p, &w).unwrap();
            assert!((cov - mc).abs() < 1e-12, "c={c}");
        }
    }

    #[test]
    fn zero_curve_with_positive_data() {
        let ds = covariate_toy();
        let p = crate::data::estimate_class_probs(&ds).unwrap();
        let m = SplineModel::new(BSplineBasis::default_cubic(), vec![0.0; 4]).unwrap();
        assert_eq!(covariate_risk(&m, &ds, &p).unwrap(), 0.0);
    }

    #[test]
    fn covariate_risk_matches_enumeration() {
        // curve theta(z) = 2z: (0.15 <= 0.2) healthy, (1.4 > 0.6), (0.8 <= 1.0) healthy,
        // (2.2 > 1.8), (1.0 <= 1.4) diseased
        let ds = covariate_toy();
        let p = crate::data::estimate_class_probs(&ds).unwrap();
        let basis = BSplineBasis::default_cubic();
        let z_at: Vec<f64> = (0..=3).map(|s| s as f64 / 3.0).collect();
        // cubic B-splines reproduce linear functions with Greville coefficients
        let knots = basis.knots();
        let beta: Vec<f64> = (0..4).map(|i| 2.0 * (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0).collect();
        let m = SplineModel::new(basis, beta).unwrap();
        for z in z_at {
            assert!((m.eval(z).unwrap() - 2.0 * z).abs() < 1e-12);
        }
        let expected = (1.0 / 0.6 / 5.0) - 2.0 * (1.0 / 0.4 / 5.0);
        let got = covariate_risk(&m, &ds, &p).unwrap();
        assert!((got - expected).abs() < 1e-12);
        let fast = CovariateObjective::new(&ds, &p, &m.basis).unwrap();
        assert!((fast.risk(&m.beta) - expected).abs() < 1e-12);
    }

    #[test]
    fn covariate_requires_kind() {
        let (ds, p, _) = two_point();
        let m = SplineModel::constant(BSplineBasis::default_cubic(), 0.0);
        assert!(covariate_risk(&m, &ds, &p).is_err());
    }
}
