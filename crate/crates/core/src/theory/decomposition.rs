//! Loss decomposition by a tracked token: piece A holds the sentences without
//! the token, piece B the sentences containing it.
//!
//! The corpus loss is the sentence-averaged NLL: every nonempty sentence
//! contributes the mean NLL of its windows with equal weight. With `p_A`, `p_B`
//! the sentence fractions and `L_A`, `L_B` the same average restricted to each
//! piece, `p_A·L_A + p_B·L_B` reproduces that loss exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{context_windows, EncodedCorpus};
use crate::error::{Error, Result};
use crate::model::{window_nll, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub token: usize,
    pub p_a: f64,
    pub p_b: f64,
    pub loss_a: Option<f64>,
    /// `None` when the token never occurs.
    pub loss_b: Option<f64>,
    pub total: f64,
    pub sentences_a: usize,
    pub sentences_b: usize,
    /// Hidden states (windows) in each piece.
    pub states_a: usize,
    pub states_b: usize,
}

/// Mean window NLL of every sentence, in sentence order. Empty sentences get
/// `None`.
pub fn sentence_losses(params: &ModelParams, corpus: &EncodedCorpus, context_width: usize) -> Result<Vec<Option<(f64, usize)>>> {
    let windows = context_windows(corpus, context_width)?;
    let nll: Vec<f64> = (0..windows.len())
        .into_par_iter()
        .map(|i| window_nll(params, windows.context(i), windows.target(i)))
        .collect::<Result<_>>()?;
    let mut out = vec![None; corpus.num_sentences()];
    let mut start = 0;
    while start < nll.len() {
        let s = windows.sentence(start);
        let mut end = start;
        while end < nll.len() && windows.sentence(end) == s {
            end += 1;
        }
        let sum: f64 = nll[start..end].iter().sum();
        out[s] = Some((sum / (end - start) as f64, end - start));
        start = end;
    }
    Ok(out)
}

pub fn rare_token_decomposition(
    params: &ModelParams,
    corpus: &EncodedCorpus,
    context_width: usize,
    token: usize,
) -> Result<DecompositionReport> {
    let losses = sentence_losses(params, corpus, context_width)?;
    decompose(&losses, corpus, token)
}

/// Decompositions for several tokens sharing one pass over the corpus.
pub fn rare_token_decompositions(
    params: &ModelParams,
    corpus: &EncodedCorpus,
    context_width: usize,
    tokens: &[usize],
) -> Result<Vec<DecompositionReport>> {
    let losses = sentence_losses(params, corpus, context_width)?;
    tokens.iter().map(|&t| decompose(&losses, corpus, t)).collect()
}

fn decompose(losses: &[Option<(f64, usize)>], corpus: &EncodedCorpus, token: usize) -> Result<DecompositionReport> {
    if token >= corpus.vocab_size() {
        return Err(Error::domain(format!("token {token} outside vocabulary")));
    }
    let (mut sum_a, mut sum_b) = (0.0, 0.0);
    let (mut sent_a, mut sent_b, mut states_a, mut states_b) = (0usize, 0usize, 0usize, 0usize);
    for (sentence, loss) in corpus.sentences().zip(losses) {
        let Some((mean, count)) = *loss else { continue };
        if sentence.contains(&token) {
            sum_b += mean;
            sent_b += 1;
            states_b += count;
        } else {
            sum_a += mean;
            sent_a += 1;
            states_a += count;
        }
    }
    let total_sentences = sent_a + sent_b;
    if total_sentences == 0 {
        return Err(Error::domain("corpus has no nonempty sentence"));
    }
    let p_a = sent_a as f64 / total_sentences as f64;
    let p_b = sent_b as f64 / total_sentences as f64;
    let loss_a = (sent_a > 0).then(|| sum_a / sent_a as f64);
    let loss_b = (sent_b > 0).then(|| sum_b / sent_b as f64);
    let total = p_a * loss_a.unwrap_or(0.0) + p_b * loss_b.unwrap_or(0.0);
    Ok(DecompositionReport {
        token,
        p_a,
        p_b,
        loss_a,
        loss_b,
        total,
        sentences_a: sent_a,
        sentences_b: sent_b,
        states_a,
        states_b,
    })
}
