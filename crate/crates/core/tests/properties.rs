use proptest::prelude::*;
use statrs::function::erf::erfc;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use youden_core::prior::sample_ordered_normal;
use youden_core::*;

/// Risk computed straight from the definition, independent of the library.
fn oracle_risk(theta: &[f64], xs: &[(f64, usize)], p: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mut r = 0.0;
    for &(x, c) in xs {
        for (j, &t) in theta.iter().enumerate() {
            if x <= t {
                if c == j + 1 {
                    r += 1.0 / p[j + 1];
                } else if c == j {
                    r -= 1.0 / p[j];
                }
            }
        }
    }
    r / n
}

/// Minimum over every non-decreasing tuple of candidate points: one below
/// the data and each distinct observed value.
fn oracle_min(xs: &[(f64, usize)], p: &[f64], dim: usize) -> f64 {
    let mut cand: Vec<f64> = xs.iter().map(|o| o.0).collect();
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    cand.insert(0, cand[0] - 1.0);
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; dim];
    loop {
        let theta: Vec<f64> = idx.iter().map(|&i| cand[i]).collect();
        best = best.min(oracle_risk(&theta, xs, p));
        let mut j = dim;
        loop {
            if j == 0 {
                return best;
            }
            j -= 1;
            if idx[j] + 1 < cand.len() {
                idx[j] += 1;
                for l in j + 1..dim {
                    idx[l] = idx[j];
                }
                break;
            }
        }
    }
}

fn small_dataset() -> impl Strategy<Value = (usize, Vec<(f64, usize)>)> {
    (2usize..=3).prop_flat_map(|k| {
        let obs = prop::collection::vec((0u8..12, 0..k), k..=30);
        (Just(k), obs)
    })
    .prop_filter("every class present", |(k, obs)| (0..*k).all(|c| obs.iter().any(|o| o.1 == c)))
    .prop_map(|(k, obs)| (k, obs.into_iter().map(|(x, c)| (x as f64 * 0.5, c)).collect()))
}

fn to_dataset(k: usize, obs: &[(f64, usize)]) -> Dataset {
    Dataset::multiclass(obs.iter().map(|&(x, c)| Observation::new(x, c as i64 + 1)).collect(), k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_search_matches_brute_force((k, obs) in small_dataset(), known in any::<bool>()) {
        let ds = to_dataset(k, &obs);
        let probs = if known {
            ClassProbs::known((1..=k).map(|c| c as f64).map(|v| v / (k * (k + 1) / 2) as f64).collect()).unwrap()
        } else {
            estimate_class_probs(&ds).unwrap()
        };
        let est = minimize_multiclass(&ds, &probs, &ClassWeights::equal(k)).unwrap();
        let best = oracle_min(&obs, probs.values(), k - 1);
        prop_assert!((est.risk_value - best).abs() <= 1e-12, "{} vs {}", est.risk_value, best);
        prop_assert!((oracle_risk(est.theta_hat.as_slice(), &obs, probs.values()) - best).abs() <= 1e-12);
        prop_assert!(est.theta_hat.as_slice().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn library_risk_matches_definition((k, obs) in small_dataset(), shift in -1.0f64..1.0) {
        let ds = to_dataset(k, &obs);
        let probs = estimate_class_probs(&ds).unwrap();
        let theta: Vec<f64> = (0..k - 1).map(|j| 2.0 + 1.5 * j as f64 + shift).collect();
        let lib = multiclass_risk(&CutoffVector::new(theta.clone()).unwrap(), &ds, &probs, &ClassWeights::equal(k)).unwrap();
        prop_assert!((lib - oracle_risk(&theta, &obs, probs.values())).abs() < 1e-12);
    }
}

/// Textbook Cox–de Boor recursion with right-closed last interval.
fn cox_de_boor(t: &[f64], i: usize, order: usize, z: f64) -> f64 {
    if order == 1 {
        let last = t.iter().rposition(|&v| v < 1.0).unwrap();
        return if z >= 1.0 {
            (i == last) as u8 as f64
        } else {
            (t[i] <= z && z < t[i + 1]) as u8 as f64
        };
    }
    let mut v = 0.0;
    let d1 = t[i + order - 1] - t[i];
    if d1 > 0.0 {
        v += (z - t[i]) / d1 * cox_de_boor(t, i, order - 1, z);
    }
    let d2 = t[i + order] - t[i + 1];
    if d2 > 0.0 {
        v += (t[i + order] - z) / d2 * cox_de_boor(t, i + 1, order - 1, z);
    }
    v
}

fn knot_grid() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec(0.01f64..0.99, 0..6),
        prop::collection::vec(0.05f64..1.0, 3),
        prop::collection::vec(0.05f64..1.0, 3),
    )
        .prop_map(|(mut inner, lo, hi)| {
            inner.sort_by(f64::total_cmp);
            let mut k = vec![-lo[0] - lo[1] - lo[2], -lo[1] - lo[2], -lo[2], 0.0];
            k.extend(inner);
            k.extend([1.0, 1.0 + hi[0], 1.0 + hi[0] + hi[1], 1.0 + hi[0] + hi[1] + hi[2]]);
            k
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn basis_is_a_partition_of_unity(knots in knot_grid()) {
        let b = BSplineBasis::new(knots).unwrap();
        for i in 0..=1000 {
            let z = i as f64 / 1000.0;
            let row = b.row(z).unwrap();
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10, "z = {z}");
            prop_assert!(row.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn basis_matches_recursion_and_has_local_support(knots in knot_grid(), z in 0.0f64..=1.0) {
        let b = BSplineBasis::new(knots.clone()).unwrap();
        for i in 0..b.dim() {
            let v = b.eval(i, z).unwrap();
            prop_assert!((v - cox_de_boor(&knots, i, 4, z)).abs() <= 1e-12);
            if z < knots[i] || z > knots[i + 4] {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn ordered_prior_draws_are_ordered(mu in prop::collection::vec(-5.0f64..5.0, 1..4), sd in 0.01f64..10.0, seed in any::<u64>()) {
        let spec = OrderedNormalSpec::isotropic(mu, sd).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let d = sample_ordered_normal(&spec, &mut rng);
            prop_assert!(d.as_slice().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(spec.log_density(d.as_slice()).is_finite());
            let mut rev = d.into_inner();
            rev.reverse();
            if rev.len() > 1 {
                prop_assert_eq!(spec.log_density(&rev), f64::NEG_INFINITY);
            }
        }
    }
}

#[test]
fn cardinal_cubic_midpoint() {
    // uniform knots: each interior cubic peaks at 2/3 on its middle knot
    let b = BSplineBasis::uniform(10).unwrap();
    let h = 1.0 / 7.0;
    for i in 3..7 {
        let centre = (i as f64 - 1.0) * h;
        assert!((b.eval(i, centre).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.eval(i, centre + h).unwrap() - 1.0 / 6.0).abs() < 1e-12);
    }
}

#[test]
fn ordered_normal_density_integrates_to_one() {
    let spec = OrderedNormalSpec::new(vec![0.3, -0.4], vec![1.0, 0.7]).unwrap();
    let h = 0.02;
    let grid: Vec<f64> = (0..=600).map(|i| -6.0 + i as f64 * h).collect();
    let mut total = 0.0;
    for &a in &grid {
        // offset so no grid point sits on the excluded diagonal
        for &b in &grid {
            total += spec.log_density(&[a, b + h / 2.0]).exp();
        }
    }
    assert!((total * h * h - 1.0).abs() < 1e-3, "{}", total * h * h);
}

#[test]
fn ordered_normal_marginal_matches_sampling() {
    let spec = OrderedNormalSpec::new(vec![1.0, 0.0, -0.5], vec![0.5, 1.0, 2.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20000;
    let mins: Vec<f64> = (0..n).map(|_| sample_ordered_normal(&spec, &mut rng).as_slice()[0]).collect();
    // P(min <= 0) = 1 - prod P(X_j > 0)
    let above = |m: f64, s: f64| 0.5 * erfc(-m / (s * std::f64::consts::SQRT_2));
    let expected = 1.0 - [(1.0, 0.5), (0.0, 1.0), (-0.5, 2.0)].iter().map(|&(m, s)| above(m, s)).product::<f64>();
    let emp = mins.iter().filter(|&&v| v <= 0.0).count() as f64 / n as f64;
    assert!((emp - expected).abs() < 0.015, "{emp} vs {expected}");
}
