//! Dense linear algebra and scalar numerics shared by every other module.
//!
//! Everything here is `f64`, row-major, and allocation-light. The SVD is a
//! one-sided (Hestenes) Jacobi method run on the smaller Gram dimension, which
//! is accurate and simple for the matrix sizes this crate deals with (at most a
//! few thousand rows by a few hundred columns).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows with L2 norm at or below this are treated as zero.
pub const ZERO_ROW_EPS: f64 = 1e-12;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_TOL: f64 = 1e-10;

/// Row-major dense matrix with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::domain(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::domain(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        self.row_iter().map(|r| dot(r, x)).collect()
    }

    /// `selfᵀ * y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matvec_t dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &yi) in self.row_iter().zip(y) {
            axpy(yi, r, &mut out);
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both are exactly zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Numerically stable `log Σ exp(vᵢ)`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("log_sum_exp of an empty slice"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("log_sum_exp input must be finite"));
    }
    Ok(lse(values))
}

/// Unchecked variant for hot paths; caller guarantees non-empty finite input.
#[inline]
pub(crate) fn lse(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub(crate) fn lse2(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::domain("softmax of an empty slice"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("softmax input must be finite"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

#[inline]
pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = 1.0 / sum;
    for x in v.iter_mut() {
        *x *= inv;
    }
}

/// Scale every row to unit L2 norm.
pub fn normalize_rows(m: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = m.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let n = norm(row);
        if n <= ZERO_ROW_EPS {
            return Err(Error::ZeroRow { row: i, norm: n });
        }
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(out)
}

/// Central-difference gradient `(f(x+εeᵢ) − f(x−εeᵢ)) / 2ε`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&probe)?;
        probe[i] = orig - step;
        let minus = f(&probe)?;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::domain(format!(
                "non-finite function value while differencing coordinate {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Top-k singular triplets.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// rows × k, orthonormal columns.
    pub left_vectors: DenseMatrix,
    /// cols × k, orthonormal columns.
    pub right_vectors: DenseMatrix,
}

impl SvdResult {
    /// `U Σ Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, k) = (self.left_vectors.rows(), self.singular_values.len());
        let n = self.right_vectors.rows();
        let mut out = DenseMatrix::zeros(m, n);
        for i in 0..m {
            let row = out.row_mut(i);
            for (t, &s) in self.singular_values.iter().enumerate().take(k) {
                let coef = self.left_vectors.get(i, t) * s;
                if coef == 0.0 {
                    continue;
                }
                for (j, r) in row.iter_mut().enumerate() {
                    *r += coef * self.right_vectors.get(j, t);
                }
            }
        }
        out
    }
}

/// Truncated SVD via one-sided Jacobi.
///
/// Sign convention: the largest-magnitude entry of every right singular vector
/// is positive.
pub fn svd(m: &DenseMatrix, k: usize) -> Result<SvdResult> {
    let min_dim = m.rows().min(m.cols());
    if k > min_dim {
        return Err(Error::domain(format!(
            "requested {k} singular triplets from a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::domain("svd input must be finite"));
    }
    // Orthogonalize the columns of the taller orientation so the rotations act
    // on the smaller Gram matrix.
    let transposed = m.rows() < m.cols();
    let work = if transposed { m.transpose() } else { m.clone() };
    let full = hestenes(&work);

    let (mut sigma, mut left, mut right) = if transposed {
        (full.sigma, full.v, full.u)
    } else {
        (full.sigma, full.u, full.v)
    };
    sigma.truncate(k);
    left = truncate_cols(&left, k);
    right = truncate_cols(&right, k);

    for t in 0..k {
        let mut best = 0;
        let mut best_abs = -1.0;
        for j in 0..right.rows() {
            let a = right.get(j, t).abs();
            if a > best_abs {
                best_abs = a;
                best = j;
            }
        }
        if right.get(best, t) < 0.0 {
            for j in 0..right.rows() {
                right.set(j, t, -right.get(j, t));
            }
            for i in 0..left.rows() {
                left.set(i, t, -left.get(i, t));
            }
        }
    }

    Ok(SvdResult {
        singular_values: sigma,
        left_vectors: left,
        right_vectors: right,
    })
}

fn truncate_cols(m: &DenseMatrix, k: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), k);
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(&m.row(i)[..k]);
    }
    out
}

struct FullSvd {
    sigma: Vec<f64>,
    u: DenseMatrix,
    v: DenseMatrix,
}

/// Thin SVD of an m×n matrix with m ≥ n.
fn hestenes(a: &DenseMatrix) -> FullSvd {
    let (m, n) = (a.rows(), a.cols());
    // column-major copies: cols[j] is column j
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut max_rel_off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 || gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                max_rel_off = max_rel_off.max(rel);
                if rel <= f64::EPSILON {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if max_rel_off < JACOBI_TOL {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let scale = sigma.first().copied().unwrap_or(0.0);
    let rank_eps = scale * (m.max(n) as f64) * f64::EPSILON;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (t, &j) in order.iter().enumerate() {
        if sigma[t] > rank_eps && sigma[t] > 0.0 {
            u_cols.push(cols[j].iter().map(|x| x / sigma[t]).collect());
        } else {
            u_cols.push(vec![0.0; m]);
            deficient.push(t);
        }
    }
    complete_orthonormal(&mut u_cols, &deficient, m);

    let mut u = DenseMatrix::zeros(m, n);
    let mut vm = DenseMatrix::zeros(n, n);
    for (t, &j) in order.iter().enumerate() {
        for i in 0..m {
            u.set(i, t, u_cols[t][i]);
        }
        for i in 0..n {
            vm.set(i, t, v[j][i]);
        }
    }
    let sigma = sigma
        .into_iter()
        .enumerate()
        .map(|(t, s)| if deficient.contains(&t) { 0.0 } else { s })
        .collect();
    FullSvd { sigma, u, v: vm }
}

#[inline]
fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fill the listed (zero) columns with unit vectors orthogonal to all others,
/// using Gram–Schmidt against the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize], m: usize) {
    let mut next_basis = 0;
    for &t in missing {
        while next_basis < m {
            let mut cand = vec![0.0; m];
            cand[next_basis] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                for (s, other) in cols.iter().enumerate() {
                    if s == t || (missing.contains(&s) && norm(other) == 0.0) {
                        continue;
                    }
                    let proj = dot(&cand, other);
                    axpy(-proj, other, &mut cand);
                }
            }
            let nc = norm(&cand);
            if nc > 1e-8 {
                cols[t] = cand.iter().map(|x| x / nc).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lse_small_cases() {
        assert_abs_diff_eq!(log_sum_exp(&[0.0, 0.0]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        let big = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!(big.is_finite());
        assert_abs_diff_eq!(big, 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert!(log_sum_exp(&[]).is_err());
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0; 4]).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn normalize_pythagorean_row() {
        let m = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let n = normalize_rows(&m).unwrap();
        assert_abs_diff_eq!(n.get(0, 0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(n.get(0, 1), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn normalize_names_zero_row() {
        let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        match normalize_rows(&m) {
            Err(Error::ZeroRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn svd_of_diagonal() {
        let m = DenseMatrix::from_rows(&[[3.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = svd(&m, 2).unwrap();
        assert_abs_diff_eq!(s.singular_values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.singular_values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_rejects_large_k() {
        let m = DenseMatrix::zeros(3, 2);
        assert!(svd(&m, 3).is_err());
    }

    #[test]
    fn svd_of_zero_matrix_has_orthonormal_factors() {
        let m = DenseMatrix::zeros(4, 3);
        let s = svd(&m, 3).unwrap();
        assert!(s.singular_values.iter().all(|&v| v == 0.0));
        let utu = s.left_vectors.transpose().matmul(&s.left_vectors).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(utu.get(i, j), e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn matrix_rejects_non_finite() {
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn fd_quadratic() {
        let g = finite_difference_gradient(|x| Ok(dot(x, x)), &[1.0, 2.0], DEFAULT_FD_STEP).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(g[1], 4.0, epsilon = 1e-7);
        let z = finite_difference_gradient(|_| Ok(7.0), &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(finite_difference_gradient(|_| Ok(f64::NAN), &[0.0], 1e-5).is_err());
    }
}
