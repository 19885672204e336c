use std::sync::Arc;

use adammcmc::diagnostics::{truncated_gaussian_variance, GridDensity, GridSpec};
use adammcmc::loss::{
    banana_target, make_batches, quadratic_target, two_moons, Banana, BatchStream, LossOracle,
    MicroMlp, Quadratic,
};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn central_difference(oracle: &dyn LossOracle, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (oracle.eval(&plus).unwrap() - oracle.eval(&minus).unwrap()) / (2.0 * h)
        })
        .collect()
}

fn assert_gradient_matches(oracle: &dyn LossOracle, points: &[Vec<f64>], h: f64) {
    for theta in points {
        let (loss, grad) = oracle.eval_grad(theta).unwrap();
        assert_eq!(loss, oracle.eval(theta).unwrap());
        let fd = central_difference(oracle, theta, h);
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-3);
        for (i, (a, b)) in grad.iter().zip(&fd).enumerate() {
            assert!(
                (a - b).abs() <= 1e-5 * scale.max(b.abs()),
                "component {i}: analytic {a} vs finite difference {b}"
            );
        }
    }
}

fn normal_points(dim: usize, scale: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

fn mlp(n: usize, layers: &[usize]) -> MicroMlp {
    let data = two_moons(n, 0.15, &mut ChaCha8Rng::seed_from_u64(3));
    MicroMlp::new(layers.to_vec(), Arc::new(data)).unwrap()
}

#[test]
fn quadratic_gradient_matches_finite_differences() {
    let q = Quadratic::new(5).unwrap();
    assert_gradient_matches(&q, &normal_points(5, 2.0, 10, 1), 1e-5);
}

#[test]
fn banana_gradient_matches_finite_differences() {
    let b = Banana::new(4).unwrap();
    assert_gradient_matches(&b, &normal_points(4, 1.0, 10, 2), 1e-6);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let net = mlp(60, &[2, 8, 8, 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<Vec<f64>> = (0..10).map(|_| net.init_params(&mut rng)).collect();
    assert_gradient_matches(&net, &points, 1e-6);
}

#[test]
fn mlp_batch_gradient_matches_finite_differences() {
    let net = mlp(60, &[2, 6, 2]);
    let theta = net.init_params(&mut ChaCha8Rng::seed_from_u64(5));
    let batch: Vec<usize> = (0..60).step_by(7).collect();
    let (_, grad) = net.eval_grad_batch(&theta, &batch).unwrap();
    for i in 0..theta.len() {
        let h = 1e-6;
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += h;
        minus[i] -= h;
        let fd = (net.eval_batch(&plus, &batch).unwrap() - net.eval_batch(&minus, &batch).unwrap())
            / (2.0 * h);
        assert!((grad[i] - fd).abs() <= 1e-5 * fd.abs().max(1e-2));
    }
}

#[test]
fn batches_average_to_full_loss() {
    let net = mlp(257, &[2, 8, 2]);
    let theta = net.init_params(&mut ChaCha8Rng::seed_from_u64(6));
    let full = net.eval(&theta).unwrap();
    for (size, seed) in [(16, 1), (50, 2), (257, 3), (1, 4)] {
        let batches = make_batches(257, size, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let weighted: f64 = batches
            .iter()
            .map(|b| b.len() as f64 / 257.0 * net.eval_batch(&theta, b).unwrap())
            .sum();
        assert!((weighted - full).abs() <= 1e-10 * full.abs());
    }
}

#[test]
fn random_batch_estimate_is_unbiased() {
    let net = mlp(200, &[2, 8, 2]);
    let theta = net.init_params(&mut ChaCha8Rng::seed_from_u64(7));
    let full = net.eval(&theta).unwrap();
    let mut stream = BatchStream::new(200, 20, ChaCha8Rng::seed_from_u64(8)).unwrap();
    let draws: Vec<f64> = (0..4000)
        .map(|_| net.eval_batch(&theta, stream.next_batch()).unwrap())
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((mean - full).abs() < 4.0 * (var / draws.len() as f64).sqrt());
}

#[test]
fn batch_size_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(make_batches(10, 0, &mut rng).is_err());
    assert!(make_batches(10, 11, &mut rng).is_err());
    assert!(BatchStream::new(10, 0, ChaCha8Rng::seed_from_u64(0)).is_err());
    let net = mlp(10, &[2, 4, 2]);
    let theta = vec![0.0; net.n_params()];
    assert!(net.eval_batch(&theta, &[]).is_err());
    assert!(net.eval_batch(&theta, &[10]).is_err());
}

proptest! {
    #[test]
    fn batches_partition_the_data(n in 1usize..300, frac in 0.0f64..1.0, seed: u64) {
        let size = 1 + (frac * (n - 1) as f64) as usize;
        let batches = make_batches(n, size, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        prop_assert!(batches.iter().all(|b| b.windows(2).all(|w| w[0] < w[1])));
        prop_assert!(batches.iter().all(|b| b.len() <= size && !b.is_empty()));
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn batch_stream_covers_each_epoch(n in 2usize..100, seed: u64) {
        let size = n / 2;
        let mut stream = BatchStream::new(n, size, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let per_epoch = n.div_ceil(size);
        let mut seen: Vec<usize> = (0..per_epoch).flat_map(|_| stream.next_batch().to_vec()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    h / 3.0 * (f(a) + f(b) + inner)
}

#[test]
fn grid_density_matches_independent_quadrature() {
    let target = quadratic_target(1, 2.0, 10.0).unwrap();
    let spec = GridSpec::new(vec![-3.0], vec![3.0], vec![12]).unwrap();
    let grid = GridDensity::from_target(&target, spec, 32).unwrap();
    let masses = grid.masses();
    assert_relative_eq!(masses.iter().sum::<f64>(), 1.0, max_relative = 1e-12);

    let density = |x: f64| (-x * x).exp();
    let z = simpson(density, -3.0, 3.0, 20_000);
    for (i, m) in masses.iter().enumerate() {
        let lo = -3.0 + 0.5 * i as f64;
        let oracle = simpson(density, lo, lo + 0.5, 2_000) / z;
        assert!((m - oracle).abs() < 1e-4, "cell {i}: {m} vs {oracle}");
    }
}

#[test]
fn banana_grid_density_is_normalized() {
    let target = banana_target(2, 1.0, 10.0).unwrap();
    let spec = GridSpec::new(vec![-3.0, -2.0], vec![3.0, 8.0], vec![30, 40]).unwrap();
    let grid = GridDensity::from_target(&target, spec, 4).unwrap();
    let masses = grid.masses();
    assert_relative_eq!(masses.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
    assert!(masses.iter().all(|&m| m >= 0.0));
}

#[test]
fn truncated_variance_matches_independent_quadrature() {
    for (lambda, r) in [(1.0, 10.0), (4.0, 10.0), (1.0, 1.0), (0.5, 2.0)] {
        let w = |x: f64| (-0.5 * lambda * x * x).exp();
        let oracle = simpson(|x| x * x * w(x), -r, r, 40_000) / simpson(w, -r, r, 40_000);
        assert_relative_eq!(
            truncated_gaussian_variance(lambda, r),
            oracle,
            max_relative = 1e-8
        );
    }
}

#[test]
fn gibbs_target_respects_the_box() {
    let t = quadratic_target(2, 1.5, 1.0).unwrap();
    assert_eq!(t.log_density(&[2.0, 0.0]).unwrap(), f64::NEG_INFINITY);
    assert_relative_eq!(
        t.log_density(&[0.5, -0.5]).unwrap(),
        -1.5 * 0.25,
        max_relative = 1e-15
    );
    assert!(quadratic_target(2, 0.0, 1.0).is_err());
    assert!(quadratic_target(2, 1.0, 0.0).is_err());
}
