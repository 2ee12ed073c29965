//! Minimizer shift of a strongly convex quadratic under a bounded,
//! curvature-limited perturbation.
//!
//! `f(x) = (α/2)‖x − a‖²` and `g(x) = B·sin(⟨ω, x⟩ + φ)` with `‖ω‖² = β/B`, so
//! `|g| ≤ B` and `∇²g ⪰ −β I`. For `ε < α/(α+β)` the minimizers of `f` and
//! `(1−ε)f + εg` satisfy `‖x* − x*_ε‖² ≤ 4εB / (α − ε(α+β))`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm};

pub const GRAD_TOL: f64 = 1e-10;
pub const MAX_GD_ITERS: usize = 1_000_000;
pub const CURVATURE_SLACK: f64 = 1e-8;
const CURVATURE_SEGMENTS: usize = 20;
const CURVATURE_STEP: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub dimension: usize,
    /// `‖x* − x*_ε‖²`
    pub lhs: f64,
    /// `4εB / (α − ε(α+β))`
    pub rhs: f64,
    pub holds: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Smallest `Δ²h − μ·s²` over the sampled segments, `μ = α − ε(α+β)`.
    pub min_curvature_excess: f64,
    pub strong_convexity_holds: bool,
}

pub fn perturbation_rhs(alpha: f64, beta: f64, b: f64, epsilon: f64) -> f64 {
    4.0 * epsilon * b / (alpha - epsilon * (alpha + beta))
}

pub fn check_perturbation_params(alpha: f64, beta: f64, b: f64, epsilon: f64) -> Result<()> {
    if !(alpha > 0.0 && beta > 0.0 && b > 0.0) || ![alpha, beta, b].iter().all(|v| v.is_finite()) {
        return Err(Error::domain("alpha, beta and B must be positive and finite"));
    }
    if !(epsilon >= 0.0 && epsilon < alpha / (alpha + beta)) {
        return Err(Error::domain(format!(
            "epsilon = {epsilon} violates 0 ≤ ε < α/(α+β) = {}",
            alpha / (alpha + beta)
        )));
    }
    Ok(())
}

struct Problem {
    alpha: f64,
    b: f64,
    epsilon: f64,
    center: Vec<f64>,
    omega: Vec<f64>,
    phase: f64,
}

impl Problem {
    fn value(&self, x: &[f64]) -> f64 {
        let f = 0.5 * self.alpha * x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
        let g = self.b * (dot(&self.omega, x) + self.phase).sin();
        (1.0 - self.epsilon) * f + self.epsilon * g
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let c = self.epsilon * self.b * (dot(&self.omega, x) + self.phase).cos();
        for ((o, (xi, ai)), wi) in out.iter_mut().zip(x.iter().zip(&self.center)).zip(&self.omega) {
            *o = (1.0 - self.epsilon) * self.alpha * (xi - ai) + c * wi;
        }
    }
}

pub fn verify_perturbation_bound(
    alpha: f64,
    beta: f64,
    b: f64,
    epsilon: f64,
    seed: u64,
    dimension: usize,
) -> Result<PerturbationReport> {
    check_perturbation_params(alpha, beta, b, epsilon)?;
    if dimension == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center: Vec<f64> = (0..dimension).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut omega: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
    let scale = (beta / b).sqrt() / norm(&omega);
    omega.iter_mut().for_each(|w| *w *= scale);
    let phase = rng.gen_range(0.0..TAU);
    let p = Problem {
        alpha,
        b,
        epsilon,
        center,
        omega,
        phase,
    };

    // the unperturbed minimizer is the center; descend from there
    let smooth = (1.0 - epsilon) * alpha + epsilon * beta;
    let step = 1.0 / smooth;
    let mut x = p.center.clone();
    let mut grad = vec![0.0; dimension];
    p.gradient(&x, &mut grad);
    let mut iterations = 0;
    while norm(&grad) >= GRAD_TOL {
        if iterations >= MAX_GD_ITERS {
            return Err(Error::Internal(format!(
                "gradient descent stalled at gradient norm {:e}",
                norm(&grad)
            )));
        }
        x.iter_mut().zip(&grad).for_each(|(xi, gi)| *xi -= step * gi);
        p.gradient(&x, &mut grad);
        iterations += 1;
    }
    let lhs: f64 = x.iter().zip(&p.center).map(|(a, c)| (a - c) * (a - c)).sum();
    let rhs = perturbation_rhs(alpha, beta, b, epsilon);

    let mu = alpha - epsilon * (alpha + beta);
    let mut min_excess = f64::INFINITY;
    for _ in 0..CURVATURE_SEGMENTS {
        let x0: Vec<f64> = p.center.iter().map(|c| c + rng.gen_range(-2.0..2.0)).collect();
        let mut u: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
        let nu = norm(&u);
        u.iter_mut().for_each(|v| *v /= nu);
        let s = CURVATURE_STEP;
        let plus: Vec<f64> = x0.iter().zip(&u).map(|(a, d)| a + s * d).collect();
        let minus: Vec<f64> = x0.iter().zip(&u).map(|(a, d)| a - s * d).collect();
        let second = p.value(&plus) - 2.0 * p.value(&x0) + p.value(&minus);
        min_excess = min_excess.min(second - mu * s * s);
    }

    Ok(PerturbationReport {
        alpha,
        beta,
        b,
        epsilon,
        seed,
        dimension,
        lhs,
        rhs,
        holds: lhs <= rhs,
        iterations,
        final_gradient_norm: norm(&grad),
        min_curvature_excess: min_excess,
        strong_convexity_holds: min_excess >= -CURVATURE_SLACK,
    })
}
