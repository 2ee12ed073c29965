//! Geometry of an embedding matrix: pairwise cosine statistics, rank-2
//! projection, normalized singular spectrum and the combined report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::{dot, normalize_rows, svd, DenseMatrix};
use crate::regularizer::{cosreg_fast, RegularizerValue};

pub const DEFAULT_PAIR_CAP: usize = 2_000_000;
pub const DEFAULT_RARE_QUANTILE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineStatistics {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of pairs with cosine strictly above zero.
    pub positive_fraction: f64,
    /// Number of unordered pairs behind min/max/positive_fraction.
    pub pairs_examined: usize,
    pub exact: bool,
}

/// Mean cosine over ordered pairs `i ≠ j` in Θ(N); min, max and sign counts
/// over all unordered pairs when there are at most `exact_pair_cap` of them,
/// otherwise over that many pairs drawn uniformly with replacement.
pub fn cosine_statistics(w: &DenseMatrix, exact_pair_cap: usize, seed: u64) -> Result<CosineStatistics> {
    let n = w.rows();
    if n < 2 {
        return Err(Error::domain("cosine statistics need at least 2 rows"));
    }
    let wn = normalize_rows(w)?;
    let reg = cosreg_fast(w)?;
    let mean = mean_from_regularizer(&reg);

    let total_pairs = n * (n - 1) / 2;
    let mut acc = PairAccumulator::default();
    let exact = total_pairs <= exact_pair_cap;
    if exact {
        for i in 0..n {
            for j in i + 1..n {
                acc.push(dot(wn.row(i), wn.row(j)));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..exact_pair_cap.max(1) {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            acc.push(dot(wn.row(i), wn.row(j)));
        }
    }
    Ok(CosineStatistics {
        mean,
        min: acc.min,
        max: acc.max,
        positive_fraction: acc.positive as f64 / acc.count as f64,
        pairs_examined: acc.count,
        exact,
    })
}

fn mean_from_regularizer(reg: &RegularizerValue) -> f64 {
    let n = reg.n as f64;
    reg.r_sum / (n * (n - 1.0))
}

struct PairAccumulator {
    min: f64,
    max: f64,
    positive: usize,
    count: usize,
}

impl Default for PairAccumulator {
    fn default() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            positive: 0,
            count: 0,
        }
    }
}

impl PairAccumulator {
    fn push(&mut self, c: f64) {
        self.min = self.min.min(c);
        self.max = self.max.max(c);
        if c > 0.0 {
            self.positive += 1;
        }
        self.count += 1;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection2d {
    /// N×2 matrix `W·V₂`.
    pub coordinates: DenseMatrix,
    /// `(σ₁² + σ₂²) / ‖W‖_F²`
    pub explained_energy: f64,
}

pub fn project_2d(w: &DenseMatrix) -> Result<Projection2d> {
    if w.rows() < 2 || w.cols() < 2 {
        return Err(Error::domain("projection needs at least 2 rows and 2 columns"));
    }
    let fro2 = w.frobenius_norm().powi(2);
    if fro2 == 0.0 {
        return Err(Error::domain("cannot project the zero matrix"));
    }
    let s = svd(w, 2)?;
    let coordinates = w.matmul(&s.right_vectors)?;
    let top: f64 = s.singular_values.iter().map(|v| v * v).sum();
    Ok(Projection2d {
        coordinates,
        explained_energy: (top / fro2).min(1.0),
    })
}

/// All `min(N, d)` singular values divided by the largest.
pub fn singular_spectrum(w: &DenseMatrix) -> Result<Vec<f64>> {
    let k = w.rows().min(w.cols());
    if k == 0 {
        return Err(Error::domain("empty matrix has no spectrum"));
    }
    let s = svd(w, k)?;
    let top = s.singular_values[0];
    if top == 0.0 {
        return Err(Error::domain("zero matrix has no normalized spectrum"));
    }
    Ok(s.singular_values.iter().map(|v| v / top).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub n: usize,
    pub d: usize,
    pub mean_pairwise_cosine: f64,
    pub min_pairwise_cosine: f64,
    pub max_pairwise_cosine: f64,
    pub positive_fraction: f64,
    pub pairs_examined: usize,
    pub pairs_exact: bool,
    /// Normalized singular values of the row-normalized matrix.
    pub spectrum: Vec<f64>,
    pub rank2_energy: f64,
    pub regularizer_value: RegularizerValue,
}

/// Statistics of one matrix. Everything is computed from row directions, so
/// the report does not change when rows are rescaled by positive factors.
pub fn geometry_report(w: &DenseMatrix, pair_cap: usize, seed: u64) -> Result<GeometryReport> {
    let stats = cosine_statistics(w, pair_cap, seed)?;
    let wn = normalize_rows(w)?;
    let k = wn.rows().min(wn.cols());
    let sv = svd(&wn, k)?.singular_values;
    let total: f64 = sv.iter().map(|v| v * v).sum();
    let top2: f64 = sv.iter().take(2).map(|v| v * v).sum();
    let spectrum = sv.iter().map(|v| v / sv[0]).collect();
    Ok(GeometryReport {
        n: w.rows(),
        d: w.cols(),
        mean_pairwise_cosine: stats.mean,
        min_pairwise_cosine: stats.min,
        max_pairwise_cosine: stats.max,
        positive_fraction: stats.positive_fraction,
        pairs_examined: stats.pairs_examined,
        pairs_exact: stats.exact,
        spectrum,
        rank2_energy: top2 / total,
        regularizer_value: cosreg_fast(w)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegenerationReport {
    pub full: GeometryReport,
    pub rare_quantile: f64,
    /// Number of vocabulary rows in the rare subset.
    pub rare_rows: usize,
    /// `None` when the rare subset has fewer than 2 rows.
    pub rare: Option<GeometryReport>,
    pub rare_omitted: bool,
}

/// Ids in the bottom `quantile` of the frequency ranking. Vocabulary ids are
/// assigned in frequency-rank order, so these are the largest ids.
pub fn rare_ids(vocab_len: usize, quantile: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::domain("rare_quantile must lie in [0, 1]"));
    }
    let count = ((vocab_len as f64) * quantile).round() as usize;
    Ok((vocab_len - count.min(vocab_len)..vocab_len).collect())
}

pub fn degeneration_report(
    w: &DenseMatrix,
    vocab: &Vocabulary,
    rare_quantile: f64,
    pair_cap: usize,
    seed: u64,
) -> Result<DegenerationReport> {
    if vocab.len() != w.rows() {
        return Err(Error::domain(format!(
            "vocabulary has {} entries but the matrix has {} rows",
            vocab.len(),
            w.rows()
        )));
    }
    let full = geometry_report(w, pair_cap, seed)?;
    let ids = rare_ids(vocab.len(), rare_quantile)?;
    let rare = if ids.len() >= 2 {
        Some(geometry_report(&w.select_rows(&ids), pair_cap, seed)?)
    } else {
        None
    };
    Ok(DegenerationReport {
        full,
        rare_quantile,
        rare_rows: ids.len(),
        rare_omitted: rare.is_none(),
        rare,
    })
}
