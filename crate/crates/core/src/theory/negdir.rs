//! Uniformly negative directions via the min-norm point of a convex hull.
//!
//! A direction `v` with `⟨v, hᵢ⟩ < 0` for every state exists exactly when the
//! convex hull of the states misses the origin. The min-norm point `x` of the
//! hull decides which case holds: `x ≠ 0` gives `v = −x/‖x‖`, `x = 0` gives
//! simplex weights `λ` with `Σ λᵢ hᵢ = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, norm, DenseMatrix, ZERO_ROW_EPS};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
/// Relative duality gap at which the iteration stops on a separable set.
const GAP_TOL: f64 = 1e-12;
const RESYNC_EVERY: usize = 1000;
const TRACE_POINTS: usize = 1000;
const UNIT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegDirCertificate {
    pub feasible: bool,
    /// Unit vector with `⟨v, hᵢ⟩ < 0` for all i.
    pub direction: Option<Vec<f64>>,
    /// Simplex weights whose combination of the states is (numerically) zero.
    pub witness_lambda: Option<Vec<f64>>,
    /// `maxᵢ ⟨v, hᵢ/‖hᵢ‖⟩`
    pub margin: Option<f64>,
    /// Norm of the attained hull point `Σ λᵢ hᵢ`.
    pub hull_distance: f64,
    pub tolerance: f64,
    pub iterations: usize,
}

/// Gilbert's algorithm (Frank–Wolfe with exact line search, no away steps)
/// on `min ‖Σ λᵢ hᵢ‖²` over the simplex.
pub fn find_negative_direction(states: &DenseMatrix, tolerance: f64, max_iters: usize) -> Result<NegDirCertificate> {
    let m = states.rows();
    if m == 0 {
        return Err(Error::domain("need at least one state"));
    }
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::domain("tolerance must be positive"));
    }
    if !states.is_finite() {
        return Err(Error::domain("states must be finite"));
    }
    let norms: Vec<f64> = states.row_iter().map(norm).collect();
    if let Some((row, &n)) = norms.iter().enumerate().find(|(_, &n)| n <= ZERO_ROW_EPS) {
        return Err(Error::ZeroRow { row, norm: n });
    }

    let start = norms
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut lambda = vec![0.0; m];
    lambda[start] = 1.0;
    let mut x = states.row(start).to_vec();
    let mut dots = vec![0.0; m];
    let mut trace = Vec::new();
    let trace_every = (max_iters / TRACE_POINTS).max(1);

    let mut iter = 0;
    loop {
        let nx = norm(&x);
        if iter % trace_every == 0 {
            trace.push(nx);
        }
        if nx <= tolerance {
            return infeasible_certificate(states, lambda, tolerance, iter);
        }
        for (d, h) in dots.iter_mut().zip(states.row_iter()) {
            *d = dot(h, &x);
        }
        let (best, &min_dot) = dots
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let nx2 = nx * nx;
        let separated = separates(&dots, &norms, nx, tolerance);
        if separated && nx2 - min_dot <= GAP_TOL * nx2 {
            return feasible_certificate(states, &x, tolerance, iter);
        }
        if iter >= max_iters {
            if separated {
                return feasible_certificate(states, &x, tolerance, iter);
            }
            return Err(Error::Indeterminate {
                iterations: iter,
                norm: nx,
                trace,
            });
        }

        // step towards the vertex minimizing the linearization
        let h = states.row(best);
        let dir: Vec<f64> = h.iter().zip(&x).map(|(a, b)| a - b).collect();
        let dd = dot(&dir, &dir);
        let t = if dd > 0.0 { (-dot(&x, &dir) / dd).clamp(0.0, 1.0) } else { 0.0 };
        if t > 0.0 {
            axpy(t, &dir, &mut x);
            lambda.iter_mut().for_each(|l| *l *= 1.0 - t);
            lambda[best] += t;
        }
        iter += 1;
        if iter % RESYNC_EVERY == 0 {
            x = combine(states, &lambda);
        }
    }
}

/// `−x/‖x‖` is a strict negative direction, beyond the tolerance on the
/// normalized margin.
fn separates(dots: &[f64], norms: &[f64], nx: f64, tolerance: f64) -> bool {
    dots.iter().zip(norms).all(|(d, n)| -d / (nx * n) < -tolerance)
}

fn combine(states: &DenseMatrix, lambda: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; states.cols()];
    for (l, h) in lambda.iter().zip(states.row_iter()) {
        if *l != 0.0 {
            axpy(*l, h, &mut x);
        }
    }
    x
}

fn feasible_certificate(states: &DenseMatrix, x: &[f64], tolerance: f64, iterations: usize) -> Result<NegDirCertificate> {
    let nx = norm(x);
    let v: Vec<f64> = x.iter().map(|c| -c / nx).collect();
    let margin = direction_margin(states, &v);
    if !(margin < -tolerance) || (norm(&v) - 1.0).abs() > UNIT_TOL {
        return Err(Error::Internal(format!(
            "negative-direction certificate failed re-verification (margin {margin:e})"
        )));
    }
    Ok(NegDirCertificate {
        feasible: true,
        direction: Some(v),
        witness_lambda: None,
        margin: Some(margin),
        hull_distance: nx,
        tolerance,
        iterations,
    })
}

fn infeasible_certificate(
    states: &DenseMatrix,
    mut lambda: Vec<f64>,
    tolerance: f64,
    iterations: usize,
) -> Result<NegDirCertificate> {
    lambda.iter_mut().for_each(|l| *l = l.max(0.0));
    let s: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= s);
    let dist = norm(&combine(states, &lambda));
    if dist > tolerance {
        return Err(Error::Internal(format!(
            "hull witness failed re-verification (distance {dist:e})"
        )));
    }
    Ok(NegDirCertificate {
        feasible: false,
        direction: None,
        witness_lambda: Some(lambda),
        margin: None,
        hull_distance: dist,
        tolerance,
        iterations,
    })
}

/// `maxᵢ ⟨v, hᵢ/‖hᵢ‖⟩`; negative iff `v` is uniformly negative.
pub fn direction_margin(states: &DenseMatrix, v: &[f64]) -> f64 {
    states
        .row_iter()
        .map(|h| dot(h, v) / norm(h))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_uniformly_negative(states: &DenseMatrix, v: &[f64]) -> bool {
    states.row_iter().all(|h| dot(h, v) < 0.0)
}

/// Checks that normalized convex combinations `t·v₁ + (1−t)·v₂` of two
/// negative directions, for t ∈ {0.25, 0.5, 0.75}, are negative directions too.
pub fn check_direction_convexity(states: &DenseMatrix, v1: &[f64], v2: &[f64]) -> Result<bool> {
    if !is_uniformly_negative(states, v1) || !is_uniformly_negative(states, v2) {
        return Err(Error::domain("both inputs must be uniformly negative directions"));
    }
    for t in [0.25, 0.5, 0.75] {
        let mut u: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let n = norm(&u);
        if n == 0.0 {
            return Ok(false);
        }
        u.iter_mut().for_each(|c| *c /= n);
        if !is_uniformly_negative(states, &u) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(rows: &[[f64; 2]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn two_axis_points() {
        let c = find_negative_direction(&pts(&[[1.0, 0.0], [0.0, 1.0]]), DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).unwrap();
        assert!(c.feasible);
        let v = c.direction.unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(v[0], -r, epsilon = 1e-9);
        assert_abs_diff_eq!(v[1], -r, epsilon = 1e-9);
        assert_abs_diff_eq!(c.margin.unwrap(), -r, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_cross() {
        let s = pts(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]);
        let c = find_negative_direction(&s, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).unwrap();
        assert!(!c.feasible);
        let lam = c.witness_lambda.unwrap();
        assert_abs_diff_eq!(lam.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(lam.iter().all(|&l| l >= 0.0));
        assert!(c.hull_distance <= DEFAULT_TOLERANCE);
    }

    #[test]
    fn single_state() {
        let c = find_negative_direction(&pts(&[[3.0, 4.0]]), DEFAULT_TOLERANCE, 10).unwrap();
        assert!(c.feasible);
        assert_abs_diff_eq!(c.margin.unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_state_rejected() {
        let err = find_negative_direction(&pts(&[[1.0, 0.0], [0.0, 0.0]]), 1e-7, 10).unwrap_err();
        assert!(matches!(err, Error::ZeroRow { row: 1, .. }));
    }

    #[test]
    fn budget_exhaustion_is_indeterminate() {
        let s = pts(&[[1.0, 0.0], [-1.0, 1e-3]]);
        let err = find_negative_direction(&s, 1e-7, 0).unwrap_err();
        assert!(matches!(err, Error::Indeterminate { iterations: 0, .. }));
    }

    #[test]
    fn convexity_of_negative_directions() {
        let s = pts(&[[1.0, 0.2], [0.8, -0.3], [1.0, 1.0]]);
        let v1 = [-1.0, 0.0];
        let v2 = [-0.8, -0.1];
        assert!(check_direction_convexity(&s, &v1, &v2).unwrap());
        assert!(check_direction_convexity(&s, &v1, &[1.0, 0.0]).is_err());
    }
}
