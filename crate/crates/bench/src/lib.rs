//! Benchmarks for the inner loops: the Weiszfeld solver, the two mixture
//! quantile evaluators, the Bessel function and one Gibbs sweep.

use std::hint::black_box;

use criterion::{BatchSize, Criterion};
use ddpqr_core::geoquant::{bessel_i0e, mixture_quantile_mc, mixture_quantile_polar};
use ddpqr_core::gibbs::{gibbs_sweep, initial_state, ChainRng, GibbsContext};
use ddpqr_core::simbench::{gen_covariates, gen_errors_t1, make_response};
use ddpqr_core::{empirical_geometric_quantile, Cloud, Dataset, Direction, Hyperparams, MixtureSpec, SolverSettings};

fn mixture() -> MixtureSpec {
    MixtureSpec::new(vec![0.6, 0.4], vec![vec![0.0, 0.0], vec![2.0, -1.0]], vec![1.0, 0.5]).expect("valid mixture")
}

pub fn weiszfeld(c: &mut Criterion) {
    let cloud = Cloud::from_rows(&gen_errors_t1(10_000, 1)).expect("rows");
    let u = Direction::new(vec![0.3, 0.2]).expect("direction");
    let s = SolverSettings::default();
    c.bench_function("weiszfeld_10k", |b| {
        b.iter(|| empirical_geometric_quantile(black_box(&cloud), &u, &s).expect("solve"))
    });
}

pub fn mixture_quantiles(c: &mut Criterion) {
    let mix = mixture();
    let u = Direction::new(vec![0.3, 0.2]).expect("direction");
    let s = SolverSettings::default();
    let mut g = c.benchmark_group("mixture_quantile");
    g.sample_size(20);
    g.bench_function("mc_r10k", |b| b.iter(|| mixture_quantile_mc(black_box(&mix), &u, &s, 7).expect("mc")));
    g.bench_function("polar", |b| b.iter(|| mixture_quantile_polar(black_box(&mix), &u, &s).expect("polar")));
    g.finish();
}

pub fn bessel(c: &mut Criterion) {
    let xs: Vec<f64> = (0..64).map(|i| i as f64 * 0.5).collect();
    c.bench_function("bessel_i0e_64", |b| {
        b.iter(|| xs.iter().map(|x| bessel_i0e(black_box(*x)).expect("finite")).sum::<f64>())
    });
}

pub fn gibbs(c: &mut Criterion) {
    let xs = gen_covariates(100, 3);
    let ys = make_response(&xs, &gen_errors_t1(100, 4)).expect("response");
    let data = Dataset::from_pairs(&xs, &ys).expect("data");
    let hyper = Hyperparams::simulation_defaults();
    let ctx = GibbsContext::new(&data, &hyper).expect("context");
    let mut rng = ChainRng::new(5);
    let state = initial_state(&ctx, &mut rng.init).expect("init");
    let mut g = c.benchmark_group("gibbs");
    g.sample_size(20);
    g.bench_function("sweep_n100", |b| {
        b.iter_batched(
            || state.clone(),
            |mut st| gibbs_sweep(&mut st, &ctx, &mut rng).expect("sweep"),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    weiszfeld(c);
    mixture_quantiles(c);
    bessel(c);
    gibbs(c);
}
