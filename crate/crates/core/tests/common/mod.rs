//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use embgeo::numerics::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted in non-increasing order.
pub fn jacobi_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// `AᵀA` by explicit triple loop.
pub fn gram_of_columns(a: &DenseMatrix) -> DenseMatrix {
    let (r, c) = (a.rows(), a.cols());
    let mut g = DenseMatrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let mut s = 0.0;
            for k in 0..r {
                s += a.get(k, i) * a.get(k, j);
            }
            g.set(i, j, s);
        }
    }
    g
}

pub fn naive_logits(w: &DenseMatrix, h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.rows()];
    for l in 0..w.rows() {
        for k in 0..w.cols() {
            out[l] += w.get(l, k) * h[k];
        }
    }
    out
}

/// `−log(exp(z_y) / Σ exp(z_l))` without any shifting; only valid for
/// moderate logits.
pub fn naive_nll(logits: &[f64], target: usize) -> f64 {
    let denom: f64 = logits.iter().map(|z| z.exp()).sum();
    -(logits[target].exp() / denom).ln()
}

pub fn naive_cosine_mean(w: &DenseMatrix) -> f64 {
    let n = w.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (a, b) = (w.row(i), w.row(j));
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                s += dot / (na * nb);
            }
        }
    }
    s / (n * (n - 1)) as f64
}

/// Relative error with an absolute floor, as used for gradient checks.
pub fn grad_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

/// Hidden state recomputed with plain loops. An all-pad context has a zero
/// mean embedding; under layer norm the constant activation then maps to the
/// bias alone.
pub fn naive_hidden(p: &embgeo::model::ModelParams, ctx: &[usize]) -> Vec<f64> {
    let (n, d) = (p.embedding.rows(), p.embedding.cols());
    let ids: Vec<usize> = ctx.iter().copied().filter(|&i| i < n).collect();
    if ids.is_empty() && p.use_layer_norm {
        return p.ln_bias.clone();
    }
    let mut mean = vec![0.0; d];
    for &id in &ids {
        for k in 0..d {
            mean[k] += p.embedding.get(id, k) / ids.len() as f64;
        }
    }
    let act: Vec<f64> = (0..d)
        .map(|r| {
            let mut z = p.combiner_bias[r];
            for c in 0..d {
                z += p.combiner_weight.get(r, c) * mean[c];
            }
            z.tanh()
        })
        .collect();
    if !p.use_layer_norm {
        return act;
    }
    let mu = act.iter().sum::<f64>() / d as f64;
    let sd = (act.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / d as f64).sqrt();
    (0..d).map(|k| p.ln_gain[k] * (act[k] - mu) / sd + p.ln_bias[k]).collect()
}

/// Full-corpus NLL averaged first within each sentence and then uniformly
/// over nonempty sentences, built directly from the token stream.
pub fn naive_sentence_averaged_nll(
    p: &embgeo::model::ModelParams,
    corpus: &embgeo::corpus::EncodedCorpus,
    width: usize,
) -> f64 {
    let pad = corpus.pad_id();
    let (mut total, mut count) = (0.0, 0usize);
    for sent in corpus.sentences() {
        if sent.is_empty() {
            continue;
        }
        let mut s = 0.0;
        for t in 0..sent.len() {
            let ctx: Vec<usize> = (0..width)
                .map(|j| (t + j).checked_sub(width).map_or(pad, |i| sent[i]))
                .collect();
            let h = naive_hidden(p, &ctx);
            let z = naive_logits(&p.embedding, &h);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            s += lse - z[sent[t]];
        }
        total += s / sent.len() as f64;
        count += 1;
    }
    total / count as f64
}
