//! Posterior summaries: equal-tailed intervals, effective sample size and
//! split-R̂, plus pointwise bands for spline cutoff curves.

use serde::{Deserialize, Serialize};

use crate::data::{CredibleInterval, IntervalMethod};
use crate::error::{Error, Result};
use crate::sampler::PosteriorChain;
use crate::spline::{spline_eval_coeffs, BSplineBasis};
use crate::stats::{mean, quantile_sorted, sorted_copy};

/// ESS below this on any coordinate adds a warning.
pub const MIN_ESS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub intervals: Vec<CredibleInterval>,
    /// Effective sample size per coordinate; `NaN` for a constant coordinate.
    pub ess: Vec<f64>,
    /// Split-R̂ per coordinate; `NaN` when undefined.
    pub rhat: Vec<f64>,
    pub acceptance_rate: f64,
    pub draws: usize,
    pub warnings: Vec<String>,
}

/// Equal-tailed interval from unsorted draws.
pub fn quantile_interval(draws: &[f64], level: f64) -> Result<CredibleInterval> {
    check_level(level)?;
    if draws.is_empty() {
        return Err(Error::InvalidParameter("no draws".into()));
    }
    let s = sorted_copy(draws);
    let a = (1.0 - level) / 2.0;
    CredibleInterval::new(quantile_sorted(&s, a), quantile_sorted(&s, 1.0 - a), level, IntervalMethod::GibbsQuantile)
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("level {level} outside (0,1)")))
    }
}

pub fn summarize(chain: &PosteriorChain, level: f64) -> Result<PosteriorSummary> {
    check_level(level)?;
    if chain.draws.is_empty() {
        return Err(Error::InvalidParameter("empty chain".into()));
    }
    let dim = chain.dim();
    let mut out = PosteriorSummary {
        mean: Vec::with_capacity(dim),
        median: Vec::with_capacity(dim),
        intervals: Vec::with_capacity(dim),
        ess: Vec::with_capacity(dim),
        rhat: Vec::with_capacity(dim),
        acceptance_rate: chain.acceptance_rate,
        draws: chain.draws.len(),
        warnings: chain.warnings.clone(),
    };
    for j in 0..dim {
        let col = chain.column(j);
        let s = sorted_copy(&col);
        out.mean.push(mean(&col));
        out.median.push(quantile_sorted(&s, 0.5));
        out.intervals.push(quantile_interval(&col, level)?);
        let per_chain = chain.chain_columns(j);
        let ess = effective_sample_size(&per_chain);
        if !(ess >= MIN_ESS) && s[0] != s[s.len() - 1] {
            out.warnings.push(format!("coordinate {j}: effective sample size {ess:.1} below {MIN_ESS}"));
        }
        out.ess.push(ess);
        out.rhat.push(split_rhat(&per_chain));
    }
    Ok(out)
}

/// Between/within decomposition shared by ESS and R̂: returns
/// `(within variance W, pooled variance estimate)`.
fn variance_parts(chains: &[Vec<f64>]) -> (f64, f64) {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let b_over_n = if chains.len() > 1 {
        let grand = mean(&means);
        means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    (w, w * (n - 1.0) / n + b_over_n)
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// truncation of the autocorrelations.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    if m == 0 || chains[0].len() < 4 || chains.iter().any(|c| c.len() != chains[0].len()) {
        return f64::NAN;
    }
    let n = chains[0].len();
    let (w, var_plus) = variance_parts(chains);
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let centred: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|x| x - mu).collect()
        })
        .collect();
    // rho_t = 1 - (W - mean autocovariance at lag t) / var_plus, rho_0 = 1
    let rho = |lag: usize| -> f64 {
        if lag == 0 {
            return 1.0;
        }
        let acov = centred
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut tau = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        prev_pair = pair;
        tau += pair;
        lag += 2;
    }
    let tau = (2.0 * tau - 1.0).max(1.0 / ((m * n) as f64).log10().max(1.0));
    (m * n) as f64 / tau
}

/// Potential scale reduction factor on chains split into halves.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.first().map_or(0, |c| c.len() / 2);
    if half < 2 {
        return f64::NAN;
    }
    let mut halves = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(c[..half].to_vec());
        halves.push(c[c.len() - half..].to_vec());
    }
    let (w, var_plus) = variance_parts(&halves);
    if !(w > 0.0) {
        return f64::NAN;
    }
    (var_plus / w).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub z: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pointwise posterior mean and equal-tailed band of `beta . B(z)`.
pub fn posterior_curve(
    draws: &[Vec<f64>],
    basis: &BSplineBasis,
    z_grid: &[f64],
    level: f64,
) -> Result<Vec<CurvePoint>> {
    check_level(level)?;
    if draws.is_empty() {
        return Err(Error::InvalidParameter("no draws".into()));
    }
    if let Some(d) = draws.iter().find(|d| d.len() != basis.dim()) {
        return Err(Error::DimensionMismatch { expected: basis.dim(), got: d.len() });
    }
    let a = (1.0 - level) / 2.0;
    z_grid
        .iter()
        .map(|&z| {
            let vals = draws.iter().map(|b| spline_eval_coeffs(basis, b, z)).collect::<Result<Vec<_>>>()?;
            let s = sorted_copy(&vals);
            Ok(CurvePoint {
                z,
                mean: mean(&vals),
                lower: quantile_sorted(&s, a),
                upper: quantile_sorted(&s, 1.0 - a),
            })
        })
        .collect()
}

/// `n` equally spaced points covering `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn chain_of(draws: Vec<Vec<f64>>, chains: usize) -> PosteriorChain {
        PosteriorChain {
            draws,
            chains,
            acceptance_rate: 0.3,
            coordinate_acceptance: vec![0.3],
            burn_in: 0,
            thin: 1,
            learning_rate: 1.0,
            seed: 0,
            proposal_scales: vec![1.0],
            warnings: vec![],
        }
    }

    #[test]
    fn constant_chain() {
        let s = summarize(&chain_of(vec![vec![1.5]; 500], 1), 0.95).unwrap();
        assert_eq!(s.intervals[0].lower, 1.5);
        assert_eq!(s.intervals[0].upper, 1.5);
        assert!(s.ess[0].is_nan());
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn iid_normal_interval_and_ess() {
        let mut rng = stream(3, 0);
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| vec![rng.sample(StandardNormal)]).collect();
        let s = summarize(&chain_of(draws, 4), 0.95).unwrap();
        assert!((s.intervals[0].lower + 1.959964).abs() < 0.05);
        assert!((s.intervals[0].upper - 1.959964).abs() < 0.05);
        assert!(s.ess[0] > 80_000.0, "ess {}", s.ess[0]);
        assert!((s.rhat[0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // ESS of an AR(1) chain with coefficient phi is about N (1 - phi) / (1 + phi)
        let phi: f64 = 0.8;
        let mut rng = stream(4, 0);
        let mut x = 0.0;
        let mut draws = Vec::new();
        for _ in 0..200_000 {
            let e: f64 = rng.sample(StandardNormal);
            x = phi * x + (1.0 - phi * phi).sqrt() * e;
            draws.push(x);
        }
        let ess = effective_sample_size(&[draws]);
        let expected = 200_000.0 * (1.0 - phi) / (1.0 + phi);
        assert!((ess / expected - 1.0).abs() < 0.15, "ess {ess} expected {expected}");
    }

    #[test]
    fn stuck_chain_warns() {
        let draws: Vec<Vec<f64>> = (0..1000).map(|i| vec![(i / 200) as f64]).collect();
        let s = summarize(&chain_of(draws, 1), 0.95).unwrap();
        assert!(s.ess[0] < MIN_ESS);
        assert_eq!(s.warnings.len(), 1);
        assert!(s.rhat[0] > 1.1);
    }

    #[test]
    fn level_sets_tail_quantiles() {
        let draws: Vec<Vec<f64>> = (0..=1000).map(|i| vec![i as f64]).collect();
        let s = summarize(&chain_of(draws, 1), 0.95).unwrap();
        assert!((s.intervals[0].lower - 25.0).abs() < 1e-9);
        assert!((s.intervals[0].upper - 975.0).abs() < 1e-9);
        assert_eq!(s.median[0], 500.0);
    }

    #[test]
    fn curve_band_collapses_for_single_draw() {
        let basis = BSplineBasis::default_cubic();
        let beta = vec![0.3, 1.0, -0.5, 2.0];
        let pts = posterior_curve(&[beta.clone()], &basis, &unit_grid(11), 0.95).unwrap();
        for p in pts {
            let v = spline_eval_coeffs(&basis, &beta, p.z).unwrap();
            assert_eq!((p.lower, p.mean, p.upper), (v, v, v));
        }
    }

    #[test]
    fn constant_coefficients_give_flat_curve() {
        let basis = BSplineBasis::with_interior(&[0.3, 0.6]).unwrap();
        let draws = vec![vec![2.0; 6], vec![2.0; 6]];
        for p in posterior_curve(&draws, &basis, &unit_grid(21), 0.9).unwrap() {
            assert!((p.mean - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_rejects_bad_draws() {
        let basis = BSplineBasis::default_cubic();
        assert!(posterior_curve(&[vec![1.0; 3]], &basis, &[0.5], 0.95).is_err());
        assert!(posterior_curve(&[], &basis, &[0.5], 0.95).is_err());
    }
}
