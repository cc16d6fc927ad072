//! Priors: ordered independent normal for multi-class cutoffs, and flat,
//! normal or exponential priors on spline coefficients.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{is_strictly_increasing, CutoffVector};
use crate::error::{Error, Result};

/// Largest cutoff dimension for which the permutation sum is evaluated.
pub const MAX_ORDERED_DIM: usize = 6;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Law of the order statistics of independent `N(mu_j, sigma_j^2)` draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OrderedNormalRaw", into = "OrderedNormalRaw")]
pub struct OrderedNormalSpec {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    #[serde(skip)]
    perms: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct OrderedNormalRaw {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl TryFrom<OrderedNormalRaw> for OrderedNormalSpec {
    type Error = Error;

    fn try_from(r: OrderedNormalRaw) -> Result<Self> {
        Self::new(r.mu, r.sigma)
    }
}

impl From<OrderedNormalSpec> for OrderedNormalRaw {
    fn from(s: OrderedNormalSpec) -> Self {
        Self { mu: s.mu, sigma: s.sigma }
    }
}

impl OrderedNormalSpec {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), got: sigma.len() });
        }
        if mu.is_empty() || mu.len() > MAX_ORDERED_DIM {
            return Err(Error::InvalidParameter(format!(
                "ordered normal prior supports 1..={MAX_ORDERED_DIM} cutoffs, got {}",
                mu.len()
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("prior means must be finite".into()));
        }
        if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!("prior sds must be positive: {sigma:?}")));
        }
        let perms = permutations(mu.len());
        Ok(Self { mu, sigma, perms })
    }

    /// Same standard deviation for every coordinate.
    pub fn isotropic(mu: Vec<f64>, sd: f64) -> Result<Self> {
        let sigma = vec![sd; mu.len()];
        Self::new(mu, sigma)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Log density of the ordered vector; `-inf` off the ordered cone.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim() || !is_strictly_increasing(theta) {
            return f64::NEG_INFINITY;
        }
        let mut terms = Vec::with_capacity(self.perms.len());
        for perm in &self.perms {
            let mut s = 0.0;
            for (j, &src) in perm.iter().enumerate() {
                let u = (theta[j] - self.mu[src]) / self.sigma[src];
                s += -0.5 * u * u - self.sigma[src].ln() - LN_SQRT_2PI;
            }
            terms.push(s);
        }
        log_sum_exp(&terms)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CutoffVector {
        loop {
            let mut eta: Vec<f64> = self
                .mu
                .iter()
                .zip(&self.sigma)
                .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            eta.sort_by(f64::total_cmp);
            // exact ties have probability zero but can occur for tiny sigma
            if let Ok(c) = CutoffVector::new(eta) {
                return c;
            }
        }
    }
}

pub fn ordered_normal_logdensity(spec: &OrderedNormalSpec, theta: &CutoffVector) -> f64 {
    spec.log_density(theta.as_slice())
}

pub fn sample_ordered_normal<R: Rng + ?Sized>(spec: &OrderedNormalSpec, rng: &mut R) -> CutoffVector {
    spec.sample(rng)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                go(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaPriorKind {
    /// Improper constant density.
    Flat,
    IndependentNormal { loc: Vec<f64>, scale: Vec<f64> },
    IndependentExponential { rate: Vec<f64> },
}

/// Prior on spline coefficients, optionally truncated to `|beta_j| <= bound`.
///
/// A flat prior needs the bound for the posterior to be proper: the risk is
/// constant once the curve clears the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaPriorSpec {
    pub kind: BetaPriorKind,
    pub bound: Option<f64>,
}

impl BetaPriorSpec {
    pub fn flat(bound: Option<f64>) -> Result<Self> {
        Self::new(BetaPriorKind::Flat, bound)
    }

    pub fn new(kind: BetaPriorKind, bound: Option<f64>) -> Result<Self> {
        if let Some(b) = bound {
            if !(b > 0.0) {
                return Err(Error::InvalidParameter(format!("coefficient bound must be positive: {b}")));
            }
        }
        match &kind {
            BetaPriorKind::Flat => {}
            BetaPriorKind::IndependentNormal { loc, scale } => {
                if loc.len() != scale.len() {
                    return Err(Error::DimensionMismatch { expected: loc.len(), got: scale.len() });
                }
                if scale.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::InvalidParameter("normal scales must be positive".into()));
                }
            }
            BetaPriorKind::IndependentExponential { rate } => {
                if rate.iter().any(|&r| !(r > 0.0)) {
                    return Err(Error::InvalidParameter("exponential rates must be positive".into()));
                }
            }
        }
        Ok(Self { kind, bound })
    }

    /// Default truncation `10 max |x|` for a flat prior.
    pub fn flat_for_data(x: &[f64]) -> Self {
        let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Self { kind: BetaPriorKind::Flat, bound: Some(10.0 * m.max(1e-8)) }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        let len = match &self.kind {
            BetaPriorKind::Flat => return Ok(()),
            BetaPriorKind::IndependentNormal { loc, .. } => loc.len(),
            BetaPriorKind::IndependentExponential { rate } => rate.len(),
        };
        if len == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: d, got: len })
        }
    }

    /// Log density of one coordinate.
    pub fn coord_log_density(&self, j: usize, b: f64) -> f64 {
        if let Some(bound) = self.bound {
            if b.abs() > bound {
                return f64::NEG_INFINITY;
            }
        }
        match &self.kind {
            BetaPriorKind::Flat => 0.0,
            BetaPriorKind::IndependentNormal { loc, scale } => {
                let u = (b - loc[j]) / scale[j];
                -0.5 * u * u - scale[j].ln() - LN_SQRT_2PI
            }
            BetaPriorKind::IndependentExponential { rate } => {
                if b < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate[j].ln() - rate[j] * b
                }
            }
        }
    }

    pub fn log_density(&self, beta: &[f64]) -> f64 {
        beta.iter().enumerate().map(|(j, &b)| self.coord_log_density(j, b)).sum()
    }
}

pub fn beta_prior_logdensity(spec: &BetaPriorSpec, beta: &[f64]) -> f64 {
    spec.log_density(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::f64::consts::PI;

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn exchangeable_density_doubles() {
        let s = OrderedNormalSpec::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let got = s.log_density(&[-1.0, 1.0]);
        assert!((got - (2.0 * phi(-1.0) * phi(1.0)).ln()).abs() < 1e-12);
    }

    #[test]
    fn unordered_is_outside_support() {
        let s = OrderedNormalSpec::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(s.log_density(&[1.0, -1.0]), f64::NEG_INFINITY);
        assert_eq!(s.log_density(&[1.0, 1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn dimension_limits() {
        assert!(OrderedNormalSpec::isotropic(vec![0.0; 7], 1.0).is_err());
        assert!(OrderedNormalSpec::isotropic(vec![0.0; 6], 1.0).is_ok());
        assert!(OrderedNormalSpec::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn tiny_sigma_returns_sorted_mean() {
        let s = OrderedNormalSpec::new(vec![3.0, 1.0, 2.0], vec![1e-12; 3]).unwrap();
        let mut rng = stream(1, 0);
        let draw = s.sample(&mut rng);
        for (a, b) in draw.as_slice().iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn beta_prior_examples() {
        let flat = BetaPriorSpec::flat(None).unwrap();
        assert_eq!(flat.log_density(&[3.0, -100.0]), 0.0);
        let d = 5;
        let normal = BetaPriorSpec::new(
            BetaPriorKind::IndependentNormal { loc: vec![0.0; d], scale: vec![1.0; d] },
            None,
        )
        .unwrap();
        assert!((normal.log_density(&vec![0.0; d]) + d as f64 / 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
        let expo =
            BetaPriorSpec::new(BetaPriorKind::IndependentExponential { rate: vec![1.0; d] }, None).unwrap();
        assert!((expo.log_density(&vec![1.0; d]) + d as f64).abs() < 1e-12);
        assert_eq!(expo.log_density(&[1.0, -0.1, 1.0, 1.0, 1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn bound_truncates() {
        let p = BetaPriorSpec::flat_for_data(&[-3.0, 2.0]);
        assert_eq!(p.bound, Some(30.0));
        assert_eq!(p.log_density(&[29.0]), 0.0);
        assert_eq!(p.log_density(&[-31.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn serde_roundtrip_rebuilds_permutations() {
        let s = OrderedNormalSpec::new(vec![0.0, 2.0], vec![1.0, 0.5]).unwrap();
        let json = serde_json_roundtrip(&s);
        assert_eq!(json.log_density(&[0.1, 1.9]), s.log_density(&[0.1, 1.9]));
    }

    fn serde_json_roundtrip(s: &OrderedNormalSpec) -> OrderedNormalSpec {
        let raw: OrderedNormalRaw = s.clone().into();
        OrderedNormalSpec::try_from(raw).unwrap()
    }
}
