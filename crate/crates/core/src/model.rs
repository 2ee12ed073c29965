//! Toy tied-weight language model.
//!
//! The encoder averages the embeddings of the (non-pad) context ids, applies an
//! affine map and `tanh`, and optionally layer normalization. The same
//! embedding matrix then scores every vocabulary row against the hidden state.
//! All gradients are written out by hand.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{context_windows, ContextWindows, EncodedCorpus, Vocabulary, VocabularyDump};
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, lse, norm, DenseMatrix, ZERO_ROW_EPS};
use crate::regularizer::{cosreg_fast, cosreg_value_and_grad, RegularizerValue};

pub const MOMENTUM: f64 = 0.9;
pub const MIN_GAIN: f64 = 1e-6;
pub const MIN_VARIANCE: f64 = 1e-12;
const EVAL_BLOCK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub context_width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the cosine regularizer.
    pub gamma: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub use_layer_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 32,
            context_width: 3,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 32,
            gamma: 0.0,
            seed: 1,
            optimizer: OptimizerKind::Sgd,
            use_layer_norm: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim < 2 {
            return Err(Error::domain("embedding_dim must be at least 2"));
        }
        if self.context_width == 0 {
            return Err(Error::domain("context_width must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning_rate must be finite and non-negative"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::domain("gamma must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Tied N×d matrix: input lookup and output softmax weights.
    pub embedding: DenseMatrix,
    pub combiner_weight: DenseMatrix,
    pub combiner_bias: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub use_layer_norm: bool,
}

impl ModelParams {
    pub fn init(vocab_size: usize, dim: usize, use_layer_norm: bool, seed: u64) -> Result<Self> {
        if vocab_size == 0 || dim < 2 {
            return Err(Error::domain("model needs a nonempty vocabulary and dim ≥ 2"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 0.5 / dim as f64;
        let mut emb = DenseMatrix::zeros(vocab_size, dim);
        for i in 0..vocab_size {
            loop {
                for v in emb.row_mut(i) {
                    *v = rng.gen_range(-scale..=scale);
                }
                if norm(emb.row(i)) > ZERO_ROW_EPS {
                    break;
                }
            }
        }
        let mut comb = DenseMatrix::identity(dim);
        for v in comb.as_mut_slice() {
            *v += rng.gen_range(-1e-2..=1e-2);
        }
        Ok(Self {
            embedding: emb,
            combiner_weight: comb,
            combiner_bias: vec![0.0; dim],
            ln_gain: vec![1.0; dim],
            ln_bias: vec![0.0; dim],
            use_layer_norm,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn pad_id(&self) -> usize {
        self.vocab_size()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.combiner_weight.rows() != d
            || self.combiner_weight.cols() != d
            || self.combiner_bias.len() != d
            || self.ln_gain.len() != d
            || self.ln_bias.len() != d
        {
            return Err(Error::domain("model parameter shapes are inconsistent"));
        }
        let vecs = [&self.combiner_bias, &self.ln_gain, &self.ln_bias];
        if vecs.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::domain("model parameters must be finite"));
        }
        if self.use_layer_norm && self.ln_gain.iter().any(|&g| g == 0.0) {
            return Err(Error::domain("layer-norm gain entries must be nonzero"));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let d = self.dim();
        self.vocab_size() * d + d * d + 3 * d
    }

    /// Parameters in the fixed order embedding, combiner weight, combiner
    /// bias, gain, bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(self.embedding.as_slice());
        out.extend_from_slice(self.combiner_weight.as_slice());
        out.extend_from_slice(&self.combiner_bias);
        out.extend_from_slice(&self.ln_gain);
        out.extend_from_slice(&self.ln_bias);
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::domain("flat parameter vector has the wrong length"));
        }
        let mut rest = flat;
        for dst in self.slices_mut() {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.embedding.as_mut_slice(),
            self.combiner_weight.as_mut_slice(),
            &mut self.combiner_bias,
            &mut self.ln_gain,
            &mut self.ln_bias,
        ]
    }

    fn clamp_gain(&mut self) {
        for g in &mut self.ln_gain {
            if g.abs() < MIN_GAIN {
                *g = if *g < 0.0 { -MIN_GAIN } else { MIN_GAIN };
            }
        }
    }
}

/// Gradient buffers shaped like [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub embedding: Vec<f64>,
    pub combiner_weight: Vec<f64>,
    pub combiner_bias: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Self {
        let d = p.dim();
        Self {
            embedding: vec![0.0; p.vocab_size() * d],
            combiner_weight: vec![0.0; d * d],
            combiner_bias: vec![0.0; d],
            ln_gain: vec![0.0; d],
            ln_bias: vec![0.0; d],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        [
            &self.embedding[..],
            &self.combiner_weight,
            &self.combiner_bias,
            &self.ln_gain,
            &self.ln_bias,
        ]
        .concat()
    }

    fn slices(&self) -> [&[f64]; 5] {
        [
            &self.embedding,
            &self.combiner_weight,
            &self.combiner_bias,
            &self.ln_gain,
            &self.ln_bias,
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.embedding,
            &mut self.combiner_weight,
            &mut self.combiner_bias,
            &mut self.ln_gain,
            &mut self.ln_bias,
        ]
    }

    fn clear(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }

    fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values of one layer-norm application.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
}

pub fn layer_norm(h: &[f64], gain: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    layer_norm_forward(h, gain, bias).map(|(out, _)| out)
}

/// `g ⊙ (h − μ)/σ + b` with population variance.
pub fn layer_norm_forward(h: &[f64], gain: &[f64], bias: &[f64]) -> Result<(Vec<f64>, LayerNormCache)> {
    let d = h.len();
    if d == 0 || gain.len() != d || bias.len() != d {
        return Err(Error::domain("layer_norm dimension mismatch"));
    }
    if gain.iter().any(|&g| g == 0.0) {
        return Err(Error::domain("layer_norm gain entries must be nonzero"));
    }
    let mean = h.iter().sum::<f64>() / d as f64;
    let var = h.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
    if !(var >= MIN_VARIANCE) {
        return Err(Error::domain(format!("layer_norm input has variance {var:e}")));
    }
    let inv_std = 1.0 / var.sqrt();
    let normalized: Vec<f64> = h.iter().map(|x| (x - mean) * inv_std).collect();
    let out = normalized
        .iter()
        .zip(gain)
        .zip(bias)
        .map(|((n, g), b)| g * n + b)
        .collect();
    Ok((out, LayerNormCache { normalized, inv_std }))
}

pub struct LayerNormGrads {
    pub input: Vec<f64>,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn layer_norm_backward(cache: &LayerNormCache, gain: &[f64], grad_out: &[f64]) -> LayerNormGrads {
    let d = grad_out.len() as f64;
    let xhat = &cache.normalized;
    let dxhat: Vec<f64> = grad_out.iter().zip(gain).map(|(g, w)| g * w).collect();
    let mean_d = dxhat.iter().sum::<f64>() / d;
    let mean_dx = dot(&dxhat, xhat) / d;
    let input = dxhat
        .iter()
        .zip(xhat)
        .map(|(dx, x)| cache.inv_std * (dx - mean_d - x * mean_dx))
        .collect();
    let gain_grad = grad_out.iter().zip(xhat).map(|(g, x)| g * x).collect();
    LayerNormGrads {
        input,
        gain: gain_grad,
        bias: grad_out.to_vec(),
    }
}

struct Forward {
    mean_emb: Vec<f64>,
    non_pad: usize,
    act: Vec<f64>,
    ln: Option<LayerNormCache>,
    hidden: Vec<f64>,
}

fn forward(params: &ModelParams, context: &[usize]) -> Result<Forward> {
    let (mean_emb, non_pad) = context_mean(params, context)?;
    let mut act = params.combiner_weight.matvec(&mean_emb);
    for (a, b) in act.iter_mut().zip(&params.combiner_bias) {
        *a = (*a + b).tanh();
    }
    let (hidden, ln) = if !params.use_layer_norm {
        (act.clone(), None)
    } else if non_pad == 0 {
        // all-pad context: layer norm is undefined on a constant vector
        (params.ln_bias.clone(), None)
    } else {
        let (h, cache) = layer_norm_forward(&act, &params.ln_gain, &params.ln_bias)?;
        (h, Some(cache))
    };
    Ok(Forward {
        mean_emb,
        non_pad,
        act,
        ln,
        hidden,
    })
}

fn context_mean(params: &ModelParams, context: &[usize]) -> Result<(Vec<f64>, usize)> {
    let pad = params.pad_id();
    let mut mean = vec![0.0; params.dim()];
    let mut count = 0;
    for &id in context {
        if id == pad {
            continue;
        }
        if id > pad {
            return Err(Error::domain(format!("context id {id} outside vocabulary")));
        }
        axpy(1.0, params.embedding.row(id), &mut mean);
        count += 1;
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
    }
    Ok((mean, count))
}

/// `combiner_weight · mean(context embeddings) + combiner_bias`, before `tanh`.
pub fn pre_activation(params: &ModelParams, context: &[usize]) -> Result<Vec<f64>> {
    let (mean, _) = context_mean(params, context)?;
    let mut z = params.combiner_weight.matvec(&mean);
    axpy(1.0, &params.combiner_bias, &mut z);
    Ok(z)
}

pub fn forward_hidden(params: &ModelParams, context: &[usize]) -> Result<Vec<f64>> {
    forward(params, context).map(|f| f.hidden)
}

/// `⟨h, w_l⟩` for every vocabulary row.
pub fn logits(params: &ModelParams, h: &[f64]) -> Vec<f64> {
    params.embedding.matvec(h)
}

/// Hidden states with their next-token labels.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStateBatch {
    pub states: DenseMatrix,
    pub targets: Vec<usize>,
    /// Sentence each row came from, for partitioning by token occurrence.
    pub sentence_ids: Vec<usize>,
}

impl HiddenStateBatch {
    pub fn new(states: DenseMatrix, targets: Vec<usize>, sentence_ids: Vec<usize>) -> Result<Self> {
        if targets.len() != states.rows() || sentence_ids.len() != states.rows() {
            return Err(Error::domain("hidden-state batch lengths disagree"));
        }
        for (i, row) in states.row_iter().enumerate() {
            let n = norm(row);
            if n <= ZERO_ROW_EPS {
                return Err(Error::ZeroRow { row: i, norm: n });
            }
        }
        Ok(Self {
            states,
            targets,
            sentence_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Marks rows whose sentence contains `token`.
    pub fn appears_flags(&self, corpus: &EncodedCorpus, token: usize) -> Vec<bool> {
        let contains: Vec<bool> = corpus.sentences().map(|s| s.contains(&token)).collect();
        self.sentence_ids.iter().map(|&s| contains[s]).collect()
    }
}

/// Mean of `−log softmax(W hᵢ)[yᵢ]`.
pub fn nll_loss(params: &ModelParams, batch: &HiddenStateBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::domain("nll over an empty batch"));
    }
    let n = params.vocab_size();
    let mut total = 0.0;
    for (h, &y) in batch.states.row_iter().zip(&batch.targets) {
        if y >= n {
            return Err(Error::domain(format!("target {y} outside vocabulary of {n}")));
        }
        let l = logits(params, h);
        total += lse(&l) - l[y];
    }
    Ok(total / batch.len() as f64)
}

/// Negative log-likelihood of one window.
pub fn window_nll(params: &ModelParams, context: &[usize], target: usize) -> Result<f64> {
    if target >= params.vocab_size() {
        return Err(Error::domain(format!("target {target} outside vocabulary")));
    }
    let h = forward_hidden(params, context)?;
    let l = logits(params, &h);
    Ok(lse(&l) - l[target])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nll: f64,
    pub regularizer: RegularizerValue,
    /// `nll + γ · r_scaled`
    pub total: f64,
}

/// One training example: context ids and target id.
pub type Example<'a> = (&'a [usize], usize);

#[derive(Clone, Default)]
struct Scratch {
    /// N×B, row-major by vocabulary id: logits, then softmax coefficients.
    scores: Vec<f64>,
    /// B×d hidden states.
    hidden: Vec<f64>,
    /// d×B transpose of `hidden`.
    hidden_t: Vec<f64>,
    /// d×B gradients with respect to the hidden states.
    dh_t: Vec<f64>,
    max: Vec<f64>,
    sum: Vec<f64>,
}

impl std::fmt::Debug for Scratch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Scratch")
    }
}

/// Fills `scratch.scores` with the logits of every hidden state in
/// `scratch.hidden`, then replaces them by softmax probabilities. Returns
/// the log-normalizer of every state. Each embedding row is read once per
/// batch.
fn batch_softmax(params: &ModelParams, b: usize, scratch: &mut Scratch) -> Vec<f64> {
    let n = params.vocab_size();
    let d = params.dim();
    scratch.scores.resize(n * b, 0.0);
    scratch.max.clear();
    scratch.max.resize(b, f64::NEG_INFINITY);
    scratch.sum.clear();
    scratch.sum.resize(b, 0.0);
    transpose_into(&scratch.hidden[..b * d], b, d, &mut scratch.hidden_t);
    let ht = &scratch.hidden_t;
    for (w, out) in params.embedding.row_iter().zip(scratch.scores.chunks_exact_mut(b)) {
        out.fill(0.0);
        for (&wk, hk) in w.iter().zip(ht.chunks_exact(b)) {
            axpy(wk, hk, out);
        }
        for (o, m) in out.iter().zip(scratch.max.iter_mut()) {
            *m = m.max(*o);
        }
    }
    for out in scratch.scores.chunks_exact_mut(b) {
        for ((o, m), s) in out.iter_mut().zip(&scratch.max).zip(scratch.sum.iter_mut()) {
            *o = (*o - m).exp();
            *s += *o;
        }
    }
    let inv: Vec<f64> = scratch.sum.iter().map(|s| 1.0 / s).collect();
    for out in scratch.scores.chunks_exact_mut(b) {
        out.iter_mut().zip(&inv).for_each(|(o, i)| *o *= i);
    }
    scratch.max.iter().zip(&scratch.sum).map(|(m, s)| m + s.ln()).collect()
}

fn transpose_into(src: &[f64], rows: usize, cols: usize, dst: &mut Vec<f64>) {
    dst.clear();
    dst.resize(rows * cols, 0.0);
    for (i, row) in src.chunks_exact(cols).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            dst[j * rows + i] = v;
        }
    }
}

/// Backpropagates `dh` through layer norm, `tanh`, the combiner and the
/// input-embedding lookup of one example.
fn backprop_encoder(params: &ModelParams, context: &[usize], fwd: &Forward, dh: &[f64], grads: &mut Gradients) {
    let d = params.dim();
    let dact: Vec<f64> = match (&fwd.ln, params.use_layer_norm) {
        (Some(cache), _) => {
            let g = layer_norm_backward(cache, &params.ln_gain, dh);
            axpy(1.0, &g.gain, &mut grads.ln_gain);
            axpy(1.0, &g.bias, &mut grads.ln_bias);
            g.input
        }
        (None, true) => {
            // bypassed all-pad context: h = ln_bias
            axpy(1.0, dh, &mut grads.ln_bias);
            return;
        }
        (None, false) => dh.to_vec(),
    };

    let dz: Vec<f64> = dact.iter().zip(&fwd.act).map(|(g, a)| g * (1.0 - a * a)).collect();
    axpy(1.0, &dz, &mut grads.combiner_bias);
    for (r, &dzr) in dz.iter().enumerate() {
        if dzr != 0.0 {
            axpy(dzr, &fwd.mean_emb, &mut grads.combiner_weight[r * d..(r + 1) * d]);
        }
    }
    if fwd.non_pad > 0 {
        // input-embedding role of the tied matrix
        let de = params.combiner_weight.matvec_t(&dz);
        let inv = 1.0 / fwd.non_pad as f64;
        let pad = params.pad_id();
        for &id in context.iter().filter(|&&id| id != pad) {
            axpy(inv, &de, &mut grads.embedding[id * d..(id + 1) * d]);
        }
    }
}

fn check_target(params: &ModelParams, target: usize) -> Result<()> {
    let n = params.vocab_size();
    if target >= n {
        return Err(Error::domain(format!("target {target} outside vocabulary of {n}")));
    }
    Ok(())
}

/// Loss and full analytic gradient of `mean NLL + γ·R/N²`.
pub fn loss_and_gradient(
    params: &ModelParams,
    examples: &[Example<'_>],
    gamma: f64,
) -> Result<(LossBreakdown, Gradients)> {
    let mut grads = Gradients::zeros_like(params);
    let b = compute_into(params, examples, gamma, &mut grads, &mut Scratch::default())?;
    Ok((b, grads))
}

fn compute_into(
    params: &ModelParams,
    examples: &[Example<'_>],
    gamma: f64,
    grads: &mut Gradients,
    scratch: &mut Scratch,
) -> Result<LossBreakdown> {
    if examples.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let b = examples.len();
    let d = params.dim();
    grads.clear();
    let mut forwards = Vec::with_capacity(b);
    scratch.hidden.clear();
    for &(ctx, y) in examples {
        check_target(params, y)?;
        let f = forward(params, ctx)?;
        scratch.hidden.extend_from_slice(&f.hidden);
        forwards.push(f);
    }

    let target_logits: Vec<f64> = examples
        .iter()
        .zip(scratch.hidden.chunks_exact(d))
        .map(|(&(_, y), h)| dot(params.embedding.row(y), h))
        .collect();
    let log_norm = batch_softmax(params, b, scratch);
    let scale = 1.0 / b as f64;
    let nll = log_norm.iter().zip(&target_logits).map(|(z, t)| z - t).sum::<f64>() * scale;

    // softmax role of the tied matrix: ∂/∂w_l = Σ_b c_bl h_b, ∂/∂h_b = Σ_l c_bl w_l
    for (bi, &(_, y)) in examples.iter().enumerate() {
        scratch.scores[y * b + bi] -= 1.0;
    }
    scratch.scores.iter_mut().for_each(|c| *c *= scale);
    scratch.dh_t.clear();
    scratch.dh_t.resize(d * b, 0.0);
    for ((coef, w), g) in scratch
        .scores
        .chunks_exact(b)
        .zip(params.embedding.row_iter())
        .zip(grads.embedding.chunks_exact_mut(d))
    {
        for (((gk, &wk), hk), dhk) in g
            .iter_mut()
            .zip(w)
            .zip(scratch.hidden_t.chunks_exact(b))
            .zip(scratch.dh_t.chunks_exact_mut(b))
        {
            *gk += dot(coef, hk);
            axpy(wk, coef, dhk);
        }
    }
    let mut dh = vec![0.0; d];
    for (bi, (&(ctx, _), fwd)) in examples.iter().zip(&forwards).enumerate() {
        for (k, v) in dh.iter_mut().enumerate() {
            *v = scratch.dh_t[k * b + bi];
        }
        backprop_encoder(params, ctx, fwd, &dh, grads);
    }

    let n = params.vocab_size() as f64;
    let reg = if gamma != 0.0 {
        let (value, g) = cosreg_value_and_grad(&params.embedding)?;
        axpy(gamma / (n * n), g.as_slice(), &mut grads.embedding);
        value
    } else {
        cosreg_fast(&params.embedding)?
    };
    Ok(LossBreakdown {
        nll,
        regularizer: reg,
        total: nll + gamma * reg.r_scaled,
    })
}

/// Summed window NLL of a block of windows.
fn block_nll_sum(params: &ModelParams, windows: &ContextWindows, range: std::ops::Range<usize>) -> Result<f64> {
    let mut scratch = Scratch::default();
    let b = range.len();
    let mut target_sum = 0.0;
    for i in range {
        let y = windows.target(i);
        check_target(params, y)?;
        let h = forward_hidden(params, windows.context(i))?;
        target_sum += dot(params.embedding.row(y), &h);
        scratch.hidden.extend_from_slice(&h);
    }
    let log_norm = batch_softmax(params, b, &mut scratch);
    Ok(log_norm.iter().sum::<f64>() - target_sum)
}

/// Optimizer state carried across steps.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: OptimizerKind,
    velocity: Option<Gradients>,
    grads: Option<Gradients>,
    scratch: Option<Scratch>,
    steps: usize,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            velocity: None,
            grads: None,
            scratch: None,
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// One optimizer update on a mini-batch. Returns the loss at the parameters
/// before the update.
pub fn grad_step(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    examples: &[Example<'_>],
    gamma: f64,
    lr: f64,
) -> Result<LossBreakdown> {
    let step = opt.steps;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::domain("learning rate must be finite and non-negative"));
    }
    let training_err = |reason: String| Error::Training { step, reason };

    let grads = opt.grads.get_or_insert_with(|| Gradients::zeros_like(params));
    let scratch = opt.scratch.get_or_insert_with(Scratch::default);
    let breakdown = compute_into(params, examples, gamma, grads, scratch).map_err(|e| match e {
        Error::Domain(msg) => training_err(msg),
        Error::ZeroRow { row, .. } => training_err(format!("embedding row {row} collapsed to zero")),
        other => other,
    })?;
    if !grads.is_finite() || !breakdown.total.is_finite() {
        return Err(training_err("non-finite gradient".into()));
    }

    match opt.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
                axpy(-lr, g, p);
            }
        }
        OptimizerKind::Momentum => {
            let vel = opt.velocity.get_or_insert_with(|| Gradients::zeros_like(params));
            for ((p, g), v) in params
                .slices_mut()
                .into_iter()
                .zip(grads.slices())
                .zip(vel.slices_mut())
            {
                for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                    *vi = MOMENTUM * *vi + gi;
                    *pi -= lr * *vi;
                }
            }
        }
    }
    if params.use_layer_norm {
        params.clamp_gain();
    }
    opt.steps += 1;
    Ok(breakdown)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 is the evaluation before any update.
    pub epoch: usize,
    /// Training NLL: exact at epoch 0, afterwards the mean of the mini-batch
    /// losses seen during the epoch.
    pub nll: f64,
    pub perplexity: f64,
    pub regularizer: RegularizerValue,
    pub total_loss: f64,
    pub validation_nll: Option<f64>,
    pub validation_perplexity: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub metrics: Vec<EpochMetrics>,
}

/// Mean window NLL over a window set. Blocks of windows are evaluated in
/// parallel and summed in block order, so the result does not depend on the
/// thread count.
pub fn evaluate_nll(params: &ModelParams, windows: &ContextWindows) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::domain("cannot evaluate on an empty corpus"));
    }
    let n = windows.len();
    let blocks: Vec<f64> = (0..n.div_ceil(EVAL_BLOCK))
        .into_par_iter()
        .map(|k| block_nll_sum(params, windows, k * EVAL_BLOCK..((k + 1) * EVAL_BLOCK).min(n)))
        .collect::<Result<_>>()?;
    Ok(blocks.iter().sum::<f64>() / n as f64)
}

fn epoch_metrics(
    epoch: usize,
    params: &ModelParams,
    gamma: f64,
    nll: f64,
    valid: Option<&ContextWindows>,
) -> Result<EpochMetrics> {
    let regularizer = cosreg_fast(&params.embedding)?;
    let validation_nll = valid.map(|v| evaluate_nll(params, v)).transpose()?;
    Ok(EpochMetrics {
        epoch,
        nll,
        perplexity: nll.exp(),
        regularizer,
        total_loss: nll + gamma * regularizer.r_scaled,
        validation_nll,
        validation_perplexity: validation_nll.map(f64::exp),
    })
}

/// Shuffled mini-batch training. Deterministic given `config.seed`.
pub fn train(
    config: &TrainConfig,
    corpus: &EncodedCorpus,
    vocab: &Vocabulary,
    validation: Option<&EncodedCorpus>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::domain("training corpus is empty"));
    }
    if corpus.vocab_size() != vocab.len() || validation.is_some_and(|v| v.vocab_size() != vocab.len()) {
        return Err(Error::domain("corpus was encoded with a different vocabulary"));
    }
    let mut params = ModelParams::init(vocab.len(), config.embedding_dim, config.use_layer_norm, config.seed)?;
    let windows = context_windows(corpus, config.context_width)?;
    let valid_windows = validation
        .filter(|v| !v.is_empty())
        .map(|v| context_windows(v, config.context_width))
        .transpose()?;

    let initial_nll = evaluate_nll(&params, &windows)?;
    let mut metrics = vec![epoch_metrics(0, &params, config.gamma, initial_nll, valid_windows.as_ref())?];
    let mut opt = OptimizerState::new(config.optimizer);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut batch: Vec<Example<'_>> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut nll_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| (windows.context(i), windows.target(i))));
            let loss = grad_step(&mut params, &mut opt, &batch, config.gamma, config.learning_rate)?;
            nll_sum += loss.nll * chunk.len() as f64;
        }
        let nll = nll_sum / windows.len() as f64;
        metrics.push(epoch_metrics(epoch, &params, config.gamma, nll, valid_windows.as_ref())?);
    }
    Ok(TrainOutcome { params, metrics })
}

/// Forward pass over up to `sample_cap` windows (seeded subsample, kept in
/// corpus order). Windows whose hidden state is numerically zero are skipped.
pub fn collect_hidden_states(
    params: &ModelParams,
    corpus: &EncodedCorpus,
    context_width: usize,
    sample_cap: usize,
    seed: u64,
) -> Result<HiddenStateBatch> {
    let windows = context_windows(corpus, context_width)?;
    let chosen: Vec<usize> = if windows.len() <= sample_cap {
        (0..windows.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, windows.len(), sample_cap).into_vec();
        idx.sort_unstable();
        idx
    };
    let states: Vec<Vec<f64>> = chosen
        .par_iter()
        .map(|&i| forward_hidden(params, windows.context(i)))
        .collect::<Result<_>>()?;

    let d = params.dim();
    let mut data = Vec::with_capacity(states.len() * d);
    let mut targets = Vec::with_capacity(states.len());
    let mut sentences = Vec::with_capacity(states.len());
    for (h, &i) in states.iter().zip(&chosen) {
        if norm(h) <= ZERO_ROW_EPS {
            continue;
        }
        data.extend_from_slice(h);
        targets.push(windows.target(i));
        sentences.push(windows.sentence(i));
    }
    let rows = targets.len();
    HiddenStateBatch::new(DenseMatrix::new(rows, d, data)?, targets, sentences)
}

pub const CHECKPOINT_FORMAT: &str = "embgeo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-contained model snapshot: training config, vocabulary, parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub vocabulary: VocabularyDump,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, vocab: &Vocabulary, params: ModelParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            vocabulary: vocab.to_dump(),
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::domain(format!(
                "unsupported checkpoint format {} v{}",
                ck.format, ck.version
            )));
        }
        ck.params.validate()?;
        if ck.params.vocab_size() != ck.vocabulary.tokens.len() {
            return Err(Error::domain("checkpoint embedding rows do not match its vocabulary"));
        }
        if ck.params.dim() != ck.config.embedding_dim {
            return Err(Error::domain("checkpoint embedding width does not match its config"));
        }
        Ok(ck)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_dump(&self.vocabulary)
    }
}
