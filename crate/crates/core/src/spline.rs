//! Cubic B-spline basis on `[0, 1]` and the cutoff curves built from it.
//!
//! A basis with `d` functions lives on `d + 4` non-decreasing knots
//! `t[0] <= ... <= t[d+3]` with `t[3] = 0` and `t[d] = 1`; basis function `i`
//! (zero-based) is supported on `[t[i], t[i+4]]`. The order-one indicators are
//! half-open `[t[i], t[i+1])`, except that the last non-degenerate interval
//! inside `[0, 1]` is closed at 1 so that the basis sums to one everywhere on
//! the unit interval. Zero denominators in the recursion contribute zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ORDER: usize = 4;

/// Exterior knot offsets used when no knots are supplied: on the original
/// scale the grid was `-20, -10, 0, 20 | 89, 110, 120, 130` for data spanning
/// `[20, 89]`, i.e. offsets of 40, 30, 20 below and 21, 31, 41 above a range
/// of 69.
const DEFAULT_LOWER: [f64; 3] = [-40.0 / 69.0, -30.0 / 69.0, -20.0 / 69.0];
const DEFAULT_UPPER: [f64; 3] = [1.0 + 21.0 / 69.0, 1.0 + 31.0 / 69.0, 1.0 + 41.0 / 69.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BSplineBasis {
    knots: Vec<f64>,
    /// Index of the last non-degenerate knot interval ending at 1.
    last_span: usize,
}

impl BSplineBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 * ORDER {
            return Err(Error::InvalidKnots(format!(
                "need at least {} knots, got {}",
                2 * ORDER,
                knots.len()
            )));
        }
        if knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidKnots("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidKnots("knots must be non-decreasing".into()));
        }
        let d = knots.len() - ORDER;
        if knots[ORDER - 1] != 0.0 || knots[d] != 1.0 {
            return Err(Error::InvalidKnots(format!(
                "knot {} must equal 0 and knot {} must equal 1",
                ORDER - 1,
                d
            )));
        }
        let last_span = knots.iter().rposition(|&t| t < 1.0).expect("t[3] = 0 < 1");
        Ok(Self { knots, last_span })
    }

    /// `d = 4` basis (no interior knots) with the default exterior pattern.
    pub fn default_cubic() -> Self {
        Self::with_interior(&[]).expect("default knots are valid")
    }

    /// Default exterior pattern around the given interior knots in `(0, 1)`.
    pub fn with_interior(interior: &[f64]) -> Result<Self> {
        if interior.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::InvalidKnots("interior knots must lie in (0,1)".into()));
        }
        let mut knots = DEFAULT_LOWER.to_vec();
        knots.push(0.0);
        knots.extend_from_slice(interior);
        knots.push(1.0);
        knots.extend_from_slice(&DEFAULT_UPPER);
        Self::new(knots)
    }

    /// Equally spaced knots: `d - 4` interior knots and exterior knots
    /// continuing the same spacing.
    pub fn uniform(d: usize) -> Result<Self> {
        if d < ORDER {
            return Err(Error::InvalidKnots(format!("need d >= 4, got {d}")));
        }
        let h = 1.0 / (d - 3) as f64;
        let mut knots: Vec<f64> = (0..d + ORDER).map(|i| (i as f64 - 3.0) * h).collect();
        knots[ORDER - 1] = 0.0;
        knots[d] = 1.0;
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.knots.len() - ORDER
    }

    /// Value of basis function `i` at `z` via the Cox–de Boor recursion.
    pub fn eval(&self, i: usize, z: f64) -> Result<f64> {
        check_unit(z)?;
        if i >= self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: i });
        }
        Ok(self.recursive(i, ORDER, z))
    }

    fn indicator(&self, i: usize, z: f64) -> f64 {
        if z >= 1.0 {
            return if i == self.last_span { 1.0 } else { 0.0 };
        }
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        if a <= z && z < b {
            1.0
        } else {
            0.0
        }
    }

    fn recursive(&self, i: usize, order: usize, z: f64) -> f64 {
        if order == 1 {
            return self.indicator(i, z);
        }
        let t = &self.knots;
        let left_den = t[i + order - 1] - t[i];
        let right_den = t[i + order] - t[i + 1];
        let left = if left_den > 0.0 {
            (z - t[i]) / left_den * self.recursive(i, order - 1, z)
        } else {
            0.0
        };
        let right = if right_den > 0.0 {
            (t[i + order] - z) / right_den * self.recursive(i + 1, order - 1, z)
        } else {
            0.0
        };
        left + right
    }

    /// The (at most four) non-zero basis values at `z`, as `(first index,
    /// values)`. Triangular de Boor evaluation; agrees with [`Self::eval`].
    pub fn nonzero(&self, z: f64) -> Result<(usize, [f64; ORDER])> {
        check_unit(z)?;
        let t = &self.knots;
        let span = if z >= 1.0 {
            self.last_span
        } else {
            // largest span with t[span] <= z < t[span + 1]
            t.partition_point(|&k| k <= z) - 1
        };
        let mut n = [0.0; ORDER];
        n[0] = 1.0;
        let mut left = [0.0; ORDER];
        let mut right = [0.0; ORDER];
        for j in 1..ORDER {
            left[j] = z - t[span + 1 - j];
            right[j] = t[span + j] - z;
            let mut saved = 0.0;
            for r in 0..j {
                let den = right[r + 1] + left[j - r];
                let temp = if den > 0.0 { n[r] / den } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((span + 1 - ORDER, n))
    }

    /// Full basis vector `B(z)` of length `d`.
    pub fn row(&self, z: f64) -> Result<Vec<f64>> {
        let (first, vals) = self.nonzero(z)?;
        let mut out = vec![0.0; self.dim()];
        for (r, v) in vals.iter().enumerate() {
            out[first + r] = *v;
        }
        Ok(out)
    }
}

impl TryFrom<Vec<f64>> for BSplineBasis {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BSplineBasis> for Vec<f64> {
    fn from(b: BSplineBasis) -> Self {
        b.knots
    }
}

fn check_unit(z: f64) -> Result<()> {
    if (0.0..=1.0).contains(&z) {
        Ok(())
    } else {
        Err(Error::CovariateOutOfRange(z))
    }
}

/// Value of basis function `i` (zero-based) at `z`.
pub fn bspline_eval(basis: &BSplineBasis, i: usize, z: f64) -> Result<f64> {
    basis.eval(i, z)
}

/// A cutoff curve `theta(z) = beta . B(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineModel {
    pub basis: BSplineBasis,
    pub beta: Vec<f64>,
}

impl SplineModel {
    pub fn new(basis: BSplineBasis, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: beta.len() });
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("spline coefficients must be finite".into()));
        }
        Ok(Self { basis, beta })
    }

    /// The constant curve `theta(z) = c`.
    pub fn constant(basis: BSplineBasis, c: f64) -> Self {
        let beta = vec![c; basis.dim()];
        Self { basis, beta }
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        spline_eval_coeffs(&self.basis, &self.beta, z)
    }
}

pub fn spline_eval(model: &SplineModel, z: f64) -> Result<f64> {
    model.eval(z)
}

/// `beta . B(z)` without building a [`SplineModel`].
pub fn spline_eval_coeffs(basis: &BSplineBasis, beta: &[f64], z: f64) -> Result<f64> {
    let (first, vals) = basis.nonzero(z)?;
    Ok(vals.iter().enumerate().map(|(r, v)| v * beta[first + r]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_knots() {
        assert!(BSplineBasis::new(vec![0.0; 7]).is_err());
        assert!(BSplineBasis::new(vec![-3.0, -2.0, -1.0, 0.5, 1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(BSplineBasis::new(vec![-3.0, -2.0, -1.0, 0.0, 1.0, 0.5, 3.0, 4.0]).is_err());
        assert!(BSplineBasis::with_interior(&[1.5]).is_err());
    }

    #[test]
    fn default_knots_mirror_age_grid() {
        let b = BSplineBasis::default_cubic();
        assert_eq!(b.dim(), 4);
        let ages = [-20.0, -10.0, 0.0, 20.0, 89.0, 110.0, 120.0, 130.0];
        for (t, a) in b.knots().iter().zip(ages) {
            assert!((t - (a - 20.0) / 69.0).abs() < 1e-12);
        }
    }

    #[test]
    fn order_one_indicator() {
        let b = BSplineBasis::uniform(6).unwrap();
        // span [t3, t4) = [0, 1/3)
        assert_eq!(b.indicator(3, 0.1), 1.0);
        assert_eq!(b.indicator(3, 1.0 / 3.0), 0.0);
        assert_eq!(b.indicator(4, 1.0 / 3.0), 1.0);
        assert_eq!(b.indicator(5, 1.0), 1.0);
        assert_eq!(b.indicator(6, 1.0), 0.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let b = BSplineBasis::default_cubic();
        assert!(b.eval(0, 1.2).is_err());
        assert!(b.nonzero(-0.1).is_err());
        assert!(b.eval(4, 0.5).is_err());
    }

    #[test]
    fn recursion_and_triangular_agree() {
        let b = BSplineBasis::with_interior(&[0.2, 0.2, 0.7]).unwrap();
        for s in 0..=200 {
            let z = s as f64 / 200.0;
            let row = b.row(z).unwrap();
            for (i, r) in row.iter().enumerate() {
                assert!((b.eval(i, z).unwrap() - r).abs() < 1e-13, "i={i} z={z}");
            }
        }
    }

    #[test]
    fn constant_and_zero_models() {
        let basis = BSplineBasis::with_interior(&[0.5]).unwrap();
        let m = SplineModel::constant(basis.clone(), 3.25);
        let zero = SplineModel::new(basis, vec![0.0; 5]).unwrap();
        for s in 0..=50 {
            let z = s as f64 / 50.0;
            assert!((m.eval(z).unwrap() - 3.25).abs() < 1e-12);
            assert_eq!(zero.eval(z).unwrap(), 0.0);
        }
    }
}
