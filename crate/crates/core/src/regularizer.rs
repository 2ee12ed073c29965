//! Cosine regularization of the tied embedding matrix.
//!
//! `R = Σᵢ Σ_{j≠i} ŵᵢᵀŵⱼ = ‖Σᵢ ŵᵢ‖² − N`. The naive double loop is kept as an
//! oracle; the fast path and the gradient share the running sum `s = Σ ŵᵢ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, normalize_rows, DenseMatrix};

pub const DEFAULT_GRAM_CAP: usize = 4096;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerValue {
    /// Sum of cosines over ordered pairs `i ≠ j`.
    pub r_sum: f64,
    /// `r_sum / n²`, the quantity multiplied by γ in the training loss.
    pub r_scaled: f64,
    pub n: usize,
}

impl RegularizerValue {
    fn from_sum(r_sum: f64, n: usize) -> Self {
        let nf = n as f64;
        Self {
            r_sum,
            r_scaled: r_sum / (nf * nf),
            n,
        }
    }
}

pub fn cosreg_naive(w: &DenseMatrix) -> Result<RegularizerValue> {
    let wn = normalize_rows(w)?;
    let n = wn.rows();
    let mut r = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                r += dot(wn.row(i), wn.row(j));
            }
        }
    }
    Ok(RegularizerValue::from_sum(r, n))
}

/// Linear-time evaluation through `‖Σ ŵᵢ‖² − N`.
pub fn cosreg_fast(w: &DenseMatrix) -> Result<RegularizerValue> {
    let s = normalized_sum(w)?;
    let n = w.rows();
    Ok(RegularizerValue::from_sum(dot(&s, &s) - n as f64, n))
}

fn normalized_sum(w: &DenseMatrix) -> Result<Vec<f64>> {
    let mut s = vec![0.0; w.cols()];
    for (i, row) in w.row_iter().enumerate() {
        let nr = dot(row, row).sqrt();
        if nr <= crate::numerics::ZERO_ROW_EPS {
            return Err(Error::ZeroRow { row: i, norm: nr });
        }
        axpy(1.0 / nr, row, &mut s);
    }
    Ok(s)
}

/// Gradient of `r_sum` with respect to the raw rows:
/// `∂R/∂wᵢ = (2/‖wᵢ‖)(I − ŵᵢŵᵢᵀ) s`.
pub fn cosreg_grad(w: &DenseMatrix) -> Result<DenseMatrix> {
    let (_, grad) = cosreg_value_and_grad(w)?;
    Ok(grad)
}

pub fn cosreg_value_and_grad(w: &DenseMatrix) -> Result<(RegularizerValue, DenseMatrix)> {
    let s = normalized_sum(w)?;
    let n = w.rows();
    let mut grad = DenseMatrix::zeros(n, w.cols());
    for i in 0..n {
        let row = w.row(i);
        let nr = dot(row, row).sqrt();
        let inv = 1.0 / nr;
        // (I − ŵŵᵀ)s = s − (ŵ·s)ŵ
        let proj = dot(row, &s) * inv;
        let g = grad.row_mut(i);
        let c = 2.0 * inv;
        for ((gj, &sj), &wj) in g.iter_mut().zip(&s).zip(row) {
            *gj = c * (sj - proj * wj * inv);
        }
    }
    Ok((RegularizerValue::from_sum(dot(&s, &s) - n as f64, n), grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramSpectrumReport {
    pub n: usize,
    pub sum_of_gram: f64,
    pub trace: f64,
    pub spectral_radius: f64,
    pub power_iterations: usize,
    pub all_entries_positive: bool,
    /// `spectral_radius ≤ sum_of_gram`; only evaluated for positive Gram
    /// matrices.
    pub bound_holds: Option<bool>,
}

/// Forms `G = ŴŴᵀ`, its entry sum and trace, and its spectral radius by power
/// iteration.
pub fn gram_spectrum_check(w: &DenseMatrix, cap: usize) -> Result<GramSpectrumReport> {
    let n = w.rows();
    if n > cap {
        return Err(Error::domain(format!(
            "Gram check needs N ≤ {cap} (got {n}); subsample rows first"
        )));
    }
    let wn = normalize_rows(w)?;
    let mut g = DenseMatrix::zeros(n, n);
    let mut sum = 0.0;
    let mut trace = 0.0;
    let mut all_pos = true;
    for i in 0..n {
        for j in i..n {
            let v = dot(wn.row(i), wn.row(j));
            g.set(i, j, v);
            g.set(j, i, v);
            sum += if i == j { v } else { 2.0 * v };
            if i == j {
                trace += v;
            }
            if v <= 0.0 {
                all_pos = false;
            }
        }
    }
    let (radius, iters) = power_iteration(&g);
    // Rayleigh quotients converge from below; give the comparison one ulp-scale
    // of room relative to the larger side.
    let bound_holds = all_pos.then(|| radius <= sum * (1.0 + 1e-12));
    Ok(GramSpectrumReport {
        n,
        sum_of_gram: sum,
        trace,
        spectral_radius: radius,
        power_iterations: iters,
        all_entries_positive: all_pos,
        bound_holds,
    })
}

/// Largest-magnitude eigenvalue of a symmetric matrix.
pub(crate) fn power_iteration(g: &DenseMatrix) -> (f64, usize) {
    let n = g.rows();
    if n == 0 {
        return (0.0, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let nx = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    let mut lambda = 0.0;
    for it in 1..=POWER_MAX_ITERS {
        let y = g.matvec(&x);
        let rq = dot(&x, &y);
        let ny = dot(&y, &y).sqrt();
        if ny == 0.0 {
            return (0.0, it);
        }
        x = y.into_iter().map(|v| v / ny).collect();
        // G is PSD here, so the Rayleigh quotient tracks the spectral radius
        let new_lambda = rq.abs();
        if it > 1 && (new_lambda - lambda).abs() <= POWER_TOL * new_lambda.max(f64::MIN_POSITIVE) {
            return (new_lambda, it);
        }
        lambda = new_lambda;
    }
    (lambda, POWER_MAX_ITERS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_rows() {
        let w = m(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert_abs_diff_eq!(cosreg_naive(&w).unwrap().r_sum, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosreg_fast(&w).unwrap().r_sum, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn orthonormal_rows() {
        let w = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_abs_diff_eq!(cosreg_naive(&w).unwrap().r_sum, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosreg_fast(&w).unwrap().r_sum, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn maximal_degeneration() {
        let w = DenseMatrix::new(5, 3, [0.2, -1.0, 3.0].repeat(5)).unwrap();
        let v = cosreg_naive(&w).unwrap();
        assert_abs_diff_eq!(v.r_sum, 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.r_scaled, 20.0 / 25.0, epsilon = 1e-14);
    }

    #[test]
    fn grad_vanishes_at_equal_rows() {
        let w = DenseMatrix::new(4, 3, [1.0, 2.0, -0.5].repeat(4)).unwrap();
        let g = cosreg_grad(&w).unwrap();
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_row_rejected_with_index() {
        let w = m(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]]);
        for r in [cosreg_naive(&w).err(), cosreg_fast(&w).err(), cosreg_grad(&w).err()] {
            assert!(matches!(r, Some(Error::ZeroRow { row: 1, .. })));
        }
    }

    #[test]
    fn gram_rank_one() {
        let w = DenseMatrix::new(3, 2, [0.6, 0.8].repeat(3)).unwrap();
        let r = gram_spectrum_check(&w, DEFAULT_GRAM_CAP).unwrap();
        assert_abs_diff_eq!(r.spectral_radius, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.sum_of_gram, 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.trace, 3.0, epsilon = 1e-12);
        assert_eq!(r.bound_holds, Some(true));
    }

    #[test]
    fn gram_identity() {
        let w = DenseMatrix::identity(4);
        let r = gram_spectrum_check(&w, DEFAULT_GRAM_CAP).unwrap();
        assert_abs_diff_eq!(r.spectral_radius, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.sum_of_gram, 4.0, epsilon = 1e-12);
        assert!(!r.all_entries_positive);
        assert_eq!(r.bound_holds, None);
    }

    #[test]
    fn gram_cap_enforced() {
        let w = DenseMatrix::identity(5);
        assert!(gram_spectrum_check(&w, 4).is_err());
    }
}
