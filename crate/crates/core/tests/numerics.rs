mod common;

use approx::assert_abs_diff_eq;
use common::{gram_of_columns, jacobi_eigenvalues, random_matrix, rng};
use embgeo::numerics::{
    dot, finite_difference_gradient, log_sum_exp, normalize_rows, relative_error, softmax, svd, DenseMatrix,
};
use embgeo::Error;
use proptest::prelude::*;

#[test]
fn svd_matches_jacobi_eigenvalues() {
    let mut r = rng(1);
    for (rows, cols) in [(8, 3), (3, 8), (20, 20), (50, 7), (1, 4), (6, 1)] {
        let a = random_matrix(&mut r, rows, cols);
        let k = rows.min(cols);
        let s = svd(&a, k).unwrap();
        let small = if rows >= cols { a.clone() } else { a.transpose() };
        let ev = jacobi_eigenvalues(&gram_of_columns(&small));
        for (sv, e) in s.singular_values.iter().zip(&ev) {
            assert_abs_diff_eq!(sv * sv, e.max(0.0), epsilon = 1e-9 * ev[0].max(1.0));
        }
    }
}

#[test]
fn svd_reconstructs_and_is_orthonormal() {
    let mut r = rng(2);
    let a = random_matrix(&mut r, 30, 6);
    let s = svd(&a, 6).unwrap();
    let rec = s.reconstruct();
    assert!(relative_error(rec.as_slice(), a.as_slice()) < 1e-12);
    let vtv = gram_of_columns(&s.right_vectors);
    let utu = gram_of_columns(&s.left_vectors);
    for i in 0..6 {
        for j in 0..6 {
            let e = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(vtv.get(i, j), e, epsilon = 1e-12);
            assert_abs_diff_eq!(utu.get(i, j), e, epsilon = 1e-12);
        }
    }
}

#[test]
fn svd_rejects_bad_rank_and_nan() {
    let a = DenseMatrix::zeros(3, 2);
    assert!(matches!(svd(&a, 3), Err(Error::Domain(_))));
    assert!(DenseMatrix::from_rows(&[[f64::NAN, 1.0]]).is_err());
}

#[test]
fn svd_sign_convention() {
    let mut r = rng(3);
    let a = random_matrix(&mut r, 10, 4);
    let s = svd(&a, 4).unwrap();
    for t in 0..4 {
        let col: Vec<f64> = (0..4).map(|j| s.right_vectors.get(j, t)).collect();
        let max = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(max > 0.0);
    }
}

#[test]
fn log_sum_exp_is_shift_stable() {
    let v = [1000.0, 1000.0];
    assert_abs_diff_eq!(log_sum_exp(&v).unwrap(), 1000.0 + 2f64.ln(), epsilon = 1e-12);
    let p = softmax(&[-1e4, 0.0]).unwrap();
    assert_eq!(p[1], 1.0);
    assert!(log_sum_exp(&[]).is_err());
}

#[test]
fn normalize_rows_reports_zero_row() {
    let a = DenseMatrix::from_rows(&[[3.0, 4.0], [0.0, 0.0]]).unwrap();
    assert!(matches!(normalize_rows(&a), Err(Error::ZeroRow { row: 1, .. })));
}

#[test]
fn finite_difference_of_quadratic() {
    let g = finite_difference_gradient(|x| Ok(x[0] * x[0] + 3.0 * x[1]), &[2.0, -1.0], 1e-5).unwrap();
    assert_abs_diff_eq!(g[0], 4.0, epsilon = 1e-8);
    assert_abs_diff_eq!(g[1], 3.0, epsilon = 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_energy_matches_frobenius(seed in any::<u64>(), rows in 1usize..25, cols in 1usize..25) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, rows, cols);
        let s = svd(&a, rows.min(cols)).unwrap();
        let energy: f64 = s.singular_values.iter().map(|v| v * v).sum();
        let fro = a.frobenius_norm().powi(2);
        prop_assert!((energy - fro).abs() <= 1e-10 * fro.max(1.0));
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn softmax_sums_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = softmax(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lse = log_sum_exp(&v).unwrap();
        let direct = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((lse - direct).abs() < 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn normalized_rows_are_unit(seed in any::<u64>(), rows in 1usize..20, cols in 1usize..10) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, rows, cols);
        let n = normalize_rows(&a).unwrap();
        for row in n.row_iter() {
            prop_assert!((dot(row, row) - 1.0).abs() < 1e-12);
        }
    }
}
