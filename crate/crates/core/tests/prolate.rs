use adammcmc::prolate::ProlateCovariance;
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dense(sigma: f64, sigma_dir: f64, d: &[f64]) -> DMatrix<f64> {
    let v = DVector::from_column_slice(d);
    DMatrix::identity(d.len(), d.len()) * sigma * sigma + &v * v.transpose() * sigma_dir * sigma_dir
}

fn instance() -> impl Strategy<Value = (f64, f64, Vec<f64>, Vec<f64>)> {
    (1usize..24).prop_flat_map(|p| {
        (
            0.05f64..5.0,
            0.0f64..20.0,
            prop::collection::vec(-3.0f64..3.0, p),
            prop::collection::vec(-3.0f64..3.0, p),
        )
    })
}

proptest! {
    #[test]
    fn log_det_matches_dense_cholesky((s, sd, d, _) in instance()) {
        let cov = ProlateCovariance::new(s, sd, &d).unwrap();
        let chol = dense(s, sd, &d).cholesky().unwrap();
        let oracle = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        prop_assert!((cov.log_det() - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
    }

    #[test]
    fn quad_form_and_solve_match_dense((s, sd, d, x) in instance()) {
        let cov = ProlateCovariance::new(s, sd, &d).unwrap();
        let sigma = dense(s, sd, &d);
        let xv = DVector::from_column_slice(&x);
        let y = sigma.clone().cholesky().unwrap().solve(&xv);
        let quad = xv.dot(&y);
        prop_assert!((cov.inv_quad_form(&x).unwrap() - quad).abs() <= 1e-8 * quad.abs().max(1e-12));
        for (a, b) in cov.solve(&x).unwrap().iter().zip(y.iter()) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
        for (a, b) in cov.apply(&x).unwrap().iter().zip((&sigma * &xv).iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn apply_then_solve_is_identity((s, sd, d, x) in instance()) {
        let cov = ProlateCovariance::new(s, sd, &d).unwrap();
        let back = cov.solve(&cov.apply(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn quad_form_is_nonnegative_and_bounded_by_isotropic((s, sd, d, x) in instance()) {
        let cov = ProlateCovariance::new(s, sd, &d).unwrap();
        let q = cov.inv_quad_form(&x).unwrap();
        let iso = x.iter().map(|v| v * v).sum::<f64>() / (s * s);
        prop_assert!(q >= 0.0);
        prop_assert!(q <= iso * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn log_det_at_least_isotropic((s, sd, d, _) in instance()) {
        let cov = ProlateCovariance::new(s, sd, &d).unwrap();
        let iso = 2.0 * d.len() as f64 * s.ln();
        prop_assert!(cov.log_det() >= iso - 1e-12 * iso.abs().max(1.0));
    }
}

#[test]
fn zero_direction_noise_is_isotropic() {
    let d = [1.5, -2.0, 0.25];
    let x = [0.3, 0.7, -1.1];
    let cov = ProlateCovariance::new(0.8, 0.0, &d).unwrap();
    assert_relative_eq!(cov.log_det(), 6.0 * 0.8f64.ln(), max_relative = 1e-14);
    let iso: f64 = x.iter().map(|v| v * v).sum::<f64>() / 0.64;
    assert_relative_eq!(cov.inv_quad_form(&x).unwrap(), iso, max_relative = 1e-14);
}

#[test]
fn huge_direction_noise_stays_finite() {
    let d = vec![1e3; 16];
    let cov = ProlateCovariance::new(1e-4, 1e4, &d).unwrap();
    assert!(cov.log_det().is_finite());
    let q = cov.inv_quad_form(&[1.0; 16]).unwrap();
    assert!(q.is_finite() && q >= 0.0);
}

#[test]
fn rejects_bad_parameters() {
    let d = [1.0, 2.0];
    assert!(ProlateCovariance::new(0.0, 1.0, &d).is_err());
    assert!(ProlateCovariance::new(-1.0, 1.0, &d).is_err());
    assert!(ProlateCovariance::new(1.0, -1.0, &d).is_err());
    let cov = ProlateCovariance::new(1.0, 1.0, &d).unwrap();
    assert!(cov.inv_quad_form(&[1.0]).is_err());
}

#[test]
fn log_density_matches_dense_gaussian() {
    let d = [0.4, -1.2, 2.0, 0.1];
    let (mean, x) = ([0.1, 0.2, -0.3, 0.0], [1.0, -0.5, 0.7, 2.0]);
    let cov = ProlateCovariance::new(0.6, 2.5, &d).unwrap();
    let sigma = dense(0.6, 2.5, &d);
    let chol = sigma.cholesky().unwrap();
    let r = DVector::from_iterator(4, x.iter().zip(&mean).map(|(a, b)| a - b));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let oracle =
        -0.5 * (4.0 * (2.0 * std::f64::consts::PI).ln() + log_det + r.dot(&chol.solve(&r)));
    assert_relative_eq!(
        cov.log_density(&mean, &x).unwrap(),
        oracle,
        max_relative = 1e-12
    );
}

#[test]
fn sample_covariance_matches_dense() {
    let d = [1.0, -0.5, 0.25, 2.0, 0.0];
    let (s, sd) = (0.5, 0.8);
    let cov = ProlateCovariance::new(s, sd, &d).unwrap();
    let sigma = dense(s, sd, &d);
    let mean = [1.0, 2.0, 3.0, 4.0, 5.0];
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut acc = DMatrix::<f64>::zeros(5, 5);
    let mut first = DVector::<f64>::zeros(5);
    for _ in 0..n {
        let x = DVector::from_vec(cov.sample(&mean, &mut rng).unwrap())
            - DVector::from_column_slice(&mean);
        acc += &x * x.transpose();
        first += x;
    }
    let emp = acc / n as f64;
    for i in 0..5 {
        // Standard error of a sample mean of N(0, Σ_ii).
        assert!((first[i] / n as f64).abs() < 4.0 * (sigma[(i, i)] / n as f64).sqrt());
        for j in 0..5 {
            let var = sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2);
            let se = (var / n as f64).sqrt();
            assert!(
                (emp[(i, j)] - sigma[(i, j)]).abs() < 4.0 * se,
                "entry ({i},{j}): {} vs {}",
                emp[(i, j)],
                sigma[(i, j)]
            );
        }
    }
}

#[test]
fn sampling_skips_direction_draw_without_direction_noise() {
    let d = [1.0, 1.0];
    let iso = ProlateCovariance::new(1.0, 0.0, &d).unwrap();
    let plain = ProlateCovariance::new(1.0, 0.0, &[0.0, 0.0]).unwrap();
    let mut a = ChaCha8Rng::seed_from_u64(4);
    let mut b = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        assert_eq!(
            iso.sample(&[0.0, 0.0], &mut a).unwrap(),
            plain.sample(&[0.0, 0.0], &mut b).unwrap()
        );
    }
}
