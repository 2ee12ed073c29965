//! Gradient descent on the embedding of a token that never appears as a
//! target, with every other embedding frozen.
//!
//! With `ln Cᵢ = log Σ_{l} exp⟨hᵢ, w_l⟩` over the frozen rows, the objective is
//! `F(w) = (1/M) Σᵢ log(exp⟨hᵢ, w⟩ + Cᵢ) + (λ/2)‖w‖²`, bounded below by
//! `(1/M) Σᵢ ln Cᵢ` when `λ = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, lse, lse2, norm, sigmoid, DenseMatrix};

/// Relative slack allowed on the per-step objective decrease.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremeCaseTrace {
    /// `‖w‖` before the first step and after every step (`steps + 1` entries).
    pub norms: Vec<f64>,
    /// Objective at the same points.
    pub objective: Vec<f64>,
    /// `ln Cᵢ` per state, kept in log form to avoid underflow.
    pub log_c: Vec<f64>,
    /// `(1/M) Σ ln Cᵢ`
    pub limit: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub final_embedding: Vec<f64>,
}

impl ExtremeCaseTrace {
    /// At most `max_points` evenly spaced `(step, norm, objective)` samples,
    /// always including the first and last step.
    pub fn downsampled(&self, max_points: usize) -> Vec<(usize, f64, f64)> {
        let n = self.norms.len();
        if n == 0 || max_points == 0 {
            return Vec::new();
        }
        if n <= max_points || max_points == 1 {
            let stride = if n <= max_points { 1 } else { n };
            return (0..n).step_by(stride).map(|i| (i, self.norms[i], self.objective[i])).collect();
        }
        let mut idx: Vec<usize> = (0..max_points)
            .map(|k| k * (n - 1) / (max_points - 1))
            .collect();
        idx.dedup();
        idx.into_iter().map(|i| (i, self.norms[i], self.objective[i])).collect()
    }

    /// `‖w‖` strictly increases over every step from `from` onwards.
    pub fn strictly_increasing_from(&self, from: usize) -> bool {
        self.norms[from.min(self.norms.len())..].windows(2).all(|w| w[1] > w[0])
    }
}

/// Runs `steps` full-batch gradient steps from `w = 0`.
pub fn simulate_extreme_case(
    states: &DenseMatrix,
    fixed_embeddings: &DenseMatrix,
    steps: usize,
    lr: f64,
    weight_decay: f64,
) -> Result<ExtremeCaseTrace> {
    let m = states.rows();
    let d = states.cols();
    if m == 0 || fixed_embeddings.rows() == 0 {
        return Err(Error::domain("need at least one state and one frozen embedding"));
    }
    if fixed_embeddings.cols() != d {
        return Err(Error::domain("states and embeddings differ in width"));
    }
    if !(lr > 0.0 && lr.is_finite()) || !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(Error::domain("learning rate must be positive and weight decay non-negative"));
    }
    if !states.is_finite() || !fixed_embeddings.is_finite() {
        return Err(Error::domain("inputs must be finite"));
    }

    let log_c: Vec<f64> = states
        .row_iter()
        .map(|h| lse(&fixed_embeddings.matvec(h)))
        .collect();
    let limit = log_c.iter().sum::<f64>() / m as f64;
    let inv_m = 1.0 / m as f64;

    let mut w = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut norms = Vec::with_capacity(steps + 1);
    let mut objective = Vec::with_capacity(steps + 1);

    let eval = |w: &[f64], grad: &mut [f64]| -> f64 {
        grad.iter_mut().zip(w).for_each(|(g, wi)| *g = weight_decay * wi);
        let mut f = 0.0;
        for (h, &lc) in states.row_iter().zip(&log_c) {
            let a = dot(h, w);
            f += lse2(a, lc);
            axpy(inv_m * sigmoid(a - lc), h, grad);
        }
        f * inv_m + 0.5 * weight_decay * dot(w, w)
    };

    let mut f = eval(&w, &mut grad);
    norms.push(0.0);
    objective.push(f);
    for step in 1..=steps {
        axpy(-lr, &grad, &mut w);
        let f_new = eval(&w, &mut grad);
        if !f_new.is_finite() {
            return Err(Error::Internal(format!("objective became non-finite at step {step}")));
        }
        if f_new > f + MONOTONE_SLACK * f.abs().max(1.0) {
            return Err(Error::Internal(format!(
                "objective increased at step {step}: {f:e} -> {f_new:e}"
            )));
        }
        f = f_new;
        norms.push(norm(&w));
        objective.push(f);
    }
    Ok(ExtremeCaseTrace {
        norms,
        objective,
        log_c,
        limit,
        steps,
        learning_rate: lr,
        weight_decay,
        final_embedding: w,
    })
}
