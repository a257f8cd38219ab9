use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use sparsevar::estimators::dantzig::{dantzig, dantzig_residual, FEASIBILITY_SLACK};
use sparsevar::estimators::lasso::{kkt_violation, lambda_max_row, lasso_row, Moments, KKT_TOL};
use sparsevar::io::{parse_model, write_model};
use sparsevar::linalg::lyapunov_residual;
use sparsevar::model::{class_membership, companion, ClassVariant, SparsityClass};
use sparsevar::simlab::{aggregate, random_sparse_varp};
use sparsevar::spectral::{stacked_autocov0, LYAPUNOV_TOL};
use sparsevar::thresholding::ThresholdRule;
use sparsevar::tuning::lambda_grid;
use sparsevar::VarModel;

fn draw(d: usize, s: usize, rho: f64, p: usize, seed: u64) -> Vec<DMatrix<f64>> {
    (0..64)
        .find_map(|k| random_sparse_varp(d, s, rho, p, seed + k).ok())
        .expect("a non-degenerate draw")
}

fn rules() -> impl Strategy<Value = ThresholdRule> {
    prop_oneof![
        Just(ThresholdRule::Soft),
        Just(ThresholdRule::Hard),
        (1.0f64..8.0).prop_map(|nu| ThresholdRule::Adaptive { nu }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn thresholding_shrinks_and_kills_small_values(rule in rules(), lambda in 0.0f64..2.0, z in -5.0f64..5.0) {
        let v = rule.apply(lambda, z);
        prop_assert!(v.abs() <= z.abs());
        if z.abs() <= lambda {
            prop_assert_eq!(v, 0.0);
        }
        if let Some(c) = rule.condition_constant() {
            prop_assert!((v - z).abs() <= c * lambda + 1e-12);
        }
    }

    #[test]
    fn grid_is_decreasing_with_exact_ends(lmax in 1e-3f64..1e3, size in 2usize..80, ratio in 1e-4f64..0.5) {
        let g = lambda_grid(lmax, size, ratio).unwrap();
        prop_assert_eq!(g.len(), size);
        prop_assert_eq!(g[0], lmax);
        prop_assert!((g[size - 1] - lmax * ratio).abs() <= 1e-12 * lmax);
        prop_assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn aggregate_ignores_order(mut v in prop::collection::vec(-1e3f64..1e3, 1..60), rot in 0usize..60) {
        let a = aggregate(&v);
        let k = rot % v.len();
        v.rotate_left(k);
        v.reverse();
        let b = aggregate(&v);
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert_eq!(a.se.to_bits(), b.se.to_bits());
    }

    #[test]
    fn generated_models_are_in_class_with_exact_radius(
        d in 1usize..10, s_frac in 0.0f64..1.0, rho in 0.1f64..0.95, p in 1usize..4, seed in 0u64..1000
    ) {
        let s = 1 + ((d - 1) as f64 * s_frac) as usize;
        if let Ok(coeffs) = random_sparse_varp(d, s, rho, p, seed) {
            let class = SparsityClass::new(ClassVariant::Summed, 0.0, s as f64, f64::MAX, p).unwrap();
            prop_assert!(class_membership(&coeffs, &class).is_ok());
            let model = VarModel::with_identity_noise(coeffs).unwrap();
            prop_assert!((model.spectral_radius().unwrap() - rho).abs() <= 1e-8);
        }
    }

    #[test]
    fn stationary_covariance_solves_lyapunov(seed in 0u64..500, d in 1usize..6, p in 1usize..3) {
        let coeffs = draw(d, d, 0.9, p, seed);
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 + i as f64 } else { 0.2 });
        let g = stacked_autocov0(&coeffs, &sigma, LYAPUNOV_TOL).unwrap();
        let comp = companion(&coeffs);
        let q = &comp.embed * &sigma * comp.embed.transpose();
        prop_assert!(lyapunov_residual(&comp.a_stack, &g, &q) <= 1e-8);
    }

    #[test]
    fn model_text_round_trips(seed in 0u64..500, d in 1usize..5, p in 1usize..3) {
        let coeffs = draw(d, d, 0.7, p, seed);
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 2.0 } else { 1.0 / 3.0 });
        let model = VarModel::new(coeffs, sigma).unwrap();
        let back = parse_model(&write_model(&model, &["x".to_string()])).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn lasso_fits_pass_kkt(data in prop::collection::vec(-2.0f64..2.0, 40 * 6), frac in 0.01f64..1.0) {
        let x = DMatrix::from_row_slice(40, 5, &data[..200]);
        let y = DMatrix::from_fn(40, 1, |i, _| data[200 + i] + x[(i, 0)] - 0.5 * x[(i, 3)]);
        let m = Moments::from_matrices(&x, &y);
        let w = [1.0, 0.5, 2.0, 1.0, 1.5];
        let lambda = lambda_max_row(&m, 0, &w) * frac;
        let fit = lasso_row(&m, 0, lambda, &w, None, 1e-7, 100_000).unwrap();
        prop_assert!(kkt_violation(&m, 0, lambda, &w, &fit.beta) <= KKT_TOL);
    }

    #[test]
    fn dantzig_is_feasible(data in prop::collection::vec(-2.0f64..2.0, 30 * 4 + 30), frac in 0.01f64..1.0) {
        let x = DMatrix::from_row_slice(30, 4, &data[..120]);
        let y = DMatrix::from_row_slice(30, 1, &data[120..]);
        let m = Moments::from_matrices(&x, &y);
        let b: DVector<f64> = m.cross.column(0).into_owned();
        let lambda = b.amax() * frac;
        let beta = dantzig(&m.gram, &b, lambda, &[1.0; 4]).unwrap();
        prop_assert!(dantzig_residual(&m.gram, &b, &beta) <= lambda + FEASIBILITY_SLACK);
    }
}
