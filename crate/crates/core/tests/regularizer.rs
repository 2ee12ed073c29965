mod common;

use approx::assert_abs_diff_eq;
use common::{grad_rel_error, jacobi_eigenvalues, naive_cosine_mean, random_matrix, rng};
use embgeo::numerics::{finite_difference_gradient, DenseMatrix};
use embgeo::regularizer::{cosreg_fast, cosreg_grad, cosreg_naive, gram_spectrum_check, DEFAULT_GRAM_CAP};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn fast_matches_naive_on_random_matrices() {
    let mut r = rng(11);
    for _ in 0..60 {
        let n = r.gen_range(2..200);
        let d = r.gen_range(2..64);
        let w = random_matrix(&mut r, n, d);
        let a = cosreg_naive(&w).unwrap().r_sum;
        let b = cosreg_fast(&w).unwrap().r_sum;
        assert!((a - b).abs() <= 1e-9 * n as f64, "n={n} d={d}: {a} vs {b}");
        assert_abs_diff_eq!(a / (n * (n - 1)) as f64, naive_cosine_mean(&w), epsilon = 1e-12);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(12);
    for _ in 0..20 {
        let n = r.gen_range(2..12);
        let d = r.gen_range(2..8);
        let w = random_matrix(&mut r, n, d);
        let g = cosreg_grad(&w).unwrap();
        let fd = finite_difference_gradient(
            |x| Ok(cosreg_fast(&DenseMatrix::new(n, d, x.to_vec())?)?.r_sum),
            w.as_slice(),
            1e-6,
        )
        .unwrap();
        assert!(grad_rel_error(g.as_slice(), &fd) < 1e-6);
    }
}

#[test]
fn gram_radius_matches_jacobi() {
    let mut r = rng(13);
    for _ in 0..10 {
        let n = r.gen_range(2..15);
        let mut w = random_matrix(&mut r, n, 4);
        w.as_mut_slice().iter_mut().for_each(|v| *v = v.abs() + 0.05);
        let rep = gram_spectrum_check(&w, DEFAULT_GRAM_CAP).unwrap();
        let wn = embgeo::numerics::normalize_rows(&w).unwrap();
        let g = wn.matmul(&wn.transpose()).unwrap();
        let ev = jacobi_eigenvalues(&g);
        assert_abs_diff_eq!(rep.spectral_radius, ev[0], epsilon = 1e-7);
        assert_abs_diff_eq!(rep.trace, n as f64, epsilon = 1e-12);
        assert!(rep.all_entries_positive);
        assert_eq!(rep.bound_holds, Some(true));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regularizer_is_scale_invariant(seed in any::<u64>(), n in 2usize..30, d in 2usize..10) {
        let mut r = rng(seed);
        let w = random_matrix(&mut r, n, d);
        let mut scaled = w.clone();
        for i in 0..n {
            let s: f64 = r.gen_range(0.1..10.0);
            scaled.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        let a = cosreg_fast(&w).unwrap().r_sum;
        let b = cosreg_fast(&scaled).unwrap().r_sum;
        prop_assert!((a - b).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn regularizer_bounds(seed in any::<u64>(), n in 2usize..40, d in 2usize..10) {
        let mut r = rng(seed);
        let w = random_matrix(&mut r, n, d);
        let v = cosreg_fast(&w).unwrap();
        let nf = n as f64;
        prop_assert!(v.r_sum >= -nf - 1e-9);
        prop_assert!(v.r_sum <= nf * (nf - 1.0) + 1e-9);
    }
}
