use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use youden_bench::{covariate, multiclass};
use youden_core::{
    bootstrap_intervals, minimize_multiclass, run_chain, BSplineBasis, BetaPriorSpec, ClassWeights, GibbsPosterior,
    OrderedNormalSpec, SamplerConfig,
};

fn m_estimation(c: &mut Criterion) {
    let mut group = c.benchmark_group("minimize_multiclass");
    for n in [50, 200, 1000] {
        let sim = multiclass(n);
        let w = ClassWeights::equal(3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &sim, |b, sim| {
            b.iter(|| minimize_multiclass(black_box(&sim.dataset), &sim.probs, &w).unwrap())
        });
    }
    group.finish();
}

fn bootstrap(c: &mut Criterion) {
    let sim = multiclass(50);
    let w = ClassWeights::equal(3);
    c.bench_function("bootstrap_100_n50", |b| {
        b.iter(|| bootstrap_intervals(&sim.dataset, &sim.probs, &w, 100, 0.95, black_box(7)).unwrap())
    });
}

fn sampling(c: &mut Criterion) {
    let cfg = SamplerConfig { iterations: 2000, burn_in: 500, chains: 1, ..SamplerConfig::default() };
    let sim = multiclass(200);
    let prior = OrderedNormalSpec::isotropic(vec![2.0, 5.0], 20.0).unwrap();
    let post = GibbsPosterior::multiclass(&sim.dataset, &sim.probs, &ClassWeights::equal(3), prior, 0.5).unwrap();
    c.bench_function("chain_multiclass_n200", |b| b.iter(|| run_chain(&post, black_box(&cfg)).unwrap()));

    let sim = covariate(100);
    let x: Vec<f64> = sim.dataset.observations().iter().map(|o| o.x).collect();
    let basis = BSplineBasis::default_cubic();
    let post =
        GibbsPosterior::covariate(&sim.dataset, &sim.probs, &basis, BetaPriorSpec::flat_for_data(&x), 1.0).unwrap();
    c.bench_function("chain_covariate_n100", |b| b.iter(|| run_chain(&post, black_box(&cfg)).unwrap()));
}

fn basis(c: &mut Criterion) {
    let basis = BSplineBasis::with_interior(&[0.25, 0.5, 0.75]).unwrap();
    c.bench_function("bspline_row", |b| b.iter(|| basis.row(black_box(0.37)).unwrap()));
}

criterion_group!(benches, m_estimation, bootstrap, sampling, basis);
criterion_main!(benches);
