//! Kernel benchmarks. Ids are the same in both builds, so
//! `cargo bench --bench kernels -- --save-baseline parallel` followed by
//! `cargo bench --bench kernels --no-default-features -- --baseline parallel`
//! compares the sequential fallback against the rayon core.

use std::hint::black_box;
use std::sync::Arc;

use adammcmc::chain::{run_chain, run_chains, ChainSchedule, RunOptions};
use adammcmc::loss::{quadratic_target, two_moons, GibbsTarget, LossOracle, MicroMlp, PriorBox};
use adammcmc::prolate::ProlateCovariance;
use adammcmc::samplers::{
    AdamMcmc, AdamParams, ChainState, CorrectionParams, Kernel, ProposalParams,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn net(n: usize) -> MicroMlp {
    let data = two_moons(n, 0.15, &mut ChaCha8Rng::seed_from_u64(7));
    MicroMlp::new(MicroMlp::DEFAULT_LAYERS.to_vec(), Arc::new(data)).unwrap()
}

fn sampler() -> AdamMcmc {
    AdamMcmc::new(
        AdamParams::default(),
        ProposalParams {
            sigma: 0.03,
            sigma_dir: 3.54,
        },
        CorrectionParams::unit(),
    )
    .unwrap()
}

fn mlp_eval_grad(c: &mut Criterion) {
    let mut g = c.benchmark_group("mlp_eval_grad");
    for n in [256, 2000] {
        let m = net(n);
        let theta = m.init_params(&mut ChaCha8Rng::seed_from_u64(1));
        g.bench_with_input(BenchmarkId::from_parameter(n), &theta, |b, t| {
            b.iter(|| black_box(m.eval_grad(t).unwrap()))
        });
    }
    g.finish();
}

fn adammcmc_step(c: &mut Criterion) {
    let m = Arc::new(net(2000));
    let target = GibbsTarget::new(m.clone(), 1.0, PriorBox::default()).unwrap();
    let s = sampler();
    let start = m.init_params(&mut ChaCha8Rng::seed_from_u64(2));
    let mut state = ChainState::new(&target, start, 3).unwrap();
    c.bench_function("adammcmc_step_mlp", |b| {
        b.iter(|| black_box(s.step(&target, &mut state, None).unwrap()))
    });
}

fn independent_chains(c: &mut Criterion) {
    let target = quadratic_target(1, 1.0, 10.0).unwrap();
    let s = AdamMcmc::new(
        AdamParams {
            gamma: 1e-2,
            beta1: 0.9,
            beta2: 0.9,
            delta: 1e-8,
        },
        ProposalParams {
            sigma: 0.3,
            sigma_dir: 1.0,
        },
        CorrectionParams::unit(),
    )
    .unwrap();
    let schedule = ChainSchedule::new(1000, 0, 100, 10).unwrap();
    let opts = RunOptions::default();
    let states = || -> Vec<ChainState> {
        (0..256)
            .map(|i| ChainState::new(&target, vec![8.0], i).unwrap())
            .collect()
    };
    let mut g = c.benchmark_group("chains_256x1000");
    g.bench_function("run_chains", |b| {
        b.iter(|| black_box(run_chains(&s, &target, states(), &schedule, &opts)))
    });
    g.bench_function("sequential_loop", |b| {
        b.iter(|| {
            let runs: Vec<_> = states()
                .into_iter()
                .map(|st| run_chain(&s, &target, st, &schedule, &opts).unwrap())
                .collect();
            black_box(runs)
        })
    });
    g.finish();
}

fn prolate_ops(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = c.benchmark_group("prolate");
    for p in [354, 100_000] {
        let d: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let cov = ProlateCovariance::new(0.5, 3.0, &d).unwrap();
        g.bench_with_input(BenchmarkId::new("inv_quad_form", p), &x, |b, x| {
            b.iter(|| black_box(cov.inv_quad_form(x).unwrap()))
        });
        let mean = vec![0.0; p];
        let mut r = ChaCha8Rng::seed_from_u64(5);
        g.bench_with_input(BenchmarkId::new("sample", p), &mean, |b, m| {
            b.iter(|| black_box(cov.sample(m, &mut r).unwrap()))
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = mlp_eval_grad, adammcmc_step, independent_chains, prolate_ops
}
criterion_main!(benches);
