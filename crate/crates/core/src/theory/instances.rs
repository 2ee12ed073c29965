//! Seeded point sets for the verifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{dot, norm, DenseMatrix, ZERO_ROW_EPS};

fn gaussian_row(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v = gaussian_row(rng, d);
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// 5 to 20 points uniform in a unit square whose center is shifted uniformly
/// in `[−1.2, 1.2]²`, so roughly half the instances contain the origin.
pub fn random_2d_instance(seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(5..=20);
    let shift: [f64; 2] = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let p: [f64; 2] = [rng.gen_range(-1.0..1.0) + shift[0], rng.gen_range(-1.0..1.0) + shift[1]];
        if p[0].hypot(p[1]) > ZERO_ROW_EPS {
            out.push(p);
        }
    }
    out
}

pub fn points_to_matrix(points: &[[f64; 2]]) -> DenseMatrix {
    DenseMatrix::from_rows(points).expect("rows have equal width")
}

/// `m` Gaussian points moved into the open half-space `⟨x, u⟩ ≥ 0.1` of a
/// random unit `u`.
pub fn feasible_instance(dim: usize, m: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = unit_vector(&mut rng, dim);
    let mut data = Vec::with_capacity(m * dim);
    for _ in 0..m {
        let mut q = gaussian_row(&mut rng, dim);
        let proj = dot(&q, &u);
        let shift = proj.abs() + 0.1 - proj;
        q.iter_mut().zip(&u).for_each(|(a, b)| *a += shift * b);
        data.extend(q);
    }
    DenseMatrix::new(m, dim, data).expect("consistent shape")
}

/// `m` Gaussian points together with their negatives; the hull contains the
/// origin by construction.
pub fn symmetric_instance(dim: usize, m: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * m * dim);
    let rows: Vec<Vec<f64>> = (0..m).map(|_| gaussian_row(&mut rng, dim)).collect();
    for r in &rows {
        data.extend_from_slice(r);
    }
    for r in &rows {
        data.extend(r.iter().map(|v| -v));
    }
    DenseMatrix::new(2 * m, dim, data).expect("consistent shape")
}

/// States and frozen embeddings for the extreme-case simulation.
#[derive(Clone, Debug)]
pub struct ExtremeInstance {
    pub states: DenseMatrix,
    pub fixed_embeddings: DenseMatrix,
}

/// Parameters of [`extreme_case_instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremeInstanceSpec {
    pub dim: usize,
    pub states: usize,
    pub fixed: usize,
    /// Scale of the states along the shared direction `u`.
    pub state_scale: f64,
    /// Distance of the frozen embeddings along `−u`.
    pub embedding_offset: f64,
    pub embedding_noise: f64,
    pub seed: u64,
}

impl Default for ExtremeInstanceSpec {
    fn default() -> Self {
        Self {
            dim: 8,
            states: 50,
            fixed: 100,
            state_scale: 40.0,
            embedding_offset: 1100.0,
            embedding_noise: 30.0,
            seed: 7,
        }
    }
}

/// States `c·sᵢ·u + noise ⊥ u` with `sᵢ ∈ [0.75, 1.25]` lie in the half-space
/// `⟨x, u⟩ > 0`; frozen rows `−K·u + noise ⊥ u` sit far out along `−u`. The
/// large offset makes `ln Cᵢ` so negative that the gradient flow of the free
/// embedding has to travel past norm `K` before the objective flattens out.
pub fn extreme_case_instance(spec: &ExtremeInstanceSpec) -> ExtremeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let u = unit_vector(&mut rng, d);
    let perp = |rng: &mut ChaCha8Rng, scale: f64| {
        let mut x: Vec<f64> = gaussian_row(rng, d).into_iter().map(|v| v * scale).collect();
        let p = dot(&x, &u);
        x.iter_mut().zip(&u).for_each(|(a, b)| *a -= p * b);
        x
    };
    let mut states = Vec::with_capacity(spec.states * d);
    for _ in 0..spec.states {
        let s: f64 = rng.gen_range(0.75..1.25);
        let noise = perp(&mut rng, spec.state_scale * 0.25);
        states.extend(u.iter().zip(noise).map(|(ui, n)| spec.state_scale * s * ui + n));
    }
    let mut fixed = Vec::with_capacity(spec.fixed * d);
    for _ in 0..spec.fixed {
        let noise = perp(&mut rng, spec.embedding_noise);
        fixed.extend(u.iter().zip(noise).map(|(ui, n)| -spec.embedding_offset * ui + n));
    }
    ExtremeInstance {
        states: DenseMatrix::new(spec.states, d, states).expect("consistent shape"),
        fixed_embeddings: DenseMatrix::new(spec.fixed, d, fixed).expect("consistent shape"),
    }
}

/// Same frozen embeddings, states joined with their negatives so the hull
/// contains the origin.
pub fn mirrored(instance: &ExtremeInstance) -> ExtremeInstance {
    let s = &instance.states;
    let mut data = s.as_slice().to_vec();
    data.extend(s.as_slice().iter().map(|v| -v));
    ExtremeInstance {
        states: DenseMatrix::new(2 * s.rows(), s.cols(), data).expect("consistent shape"),
        fixed_embeddings: instance.fixed_embeddings.clone(),
    }
}
