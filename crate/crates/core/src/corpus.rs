//! Tokenization, vocabulary construction, and word-frequency statistics.

use std::collections::HashMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";

/// Lowercase, split on whitespace, and detach every non-alphanumeric
/// character as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_lowercase().collect());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Token↔id map. Ids are dense and ordered by descending count, ties broken
/// lexicographically, so id 0 is the most frequent entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total_tokens: u64,
    unk_id: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabEntry {
    pub token: String,
    pub id: usize,
    pub count: u64,
}

/// On-disk vocabulary layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularyDump {
    pub tokens: Vec<VocabEntry>,
    pub total: u64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    /// Reserved context-padding id; never a softmax class.
    pub fn pad_id(&self) -> usize {
        self.tokens.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unk id.
    pub fn id(&self, token: &str) -> usize {
        self.lookup(token).unwrap_or(self.unk_id)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    pub fn to_dump(&self) -> VocabularyDump {
        VocabularyDump {
            tokens: self
                .tokens
                .iter()
                .zip(&self.counts)
                .enumerate()
                .map(|(id, (t, &c))| VocabEntry {
                    token: t.clone(),
                    id,
                    count: c,
                })
                .collect(),
            total: self.total_tokens,
        }
    }

    pub fn from_dump(dump: &VocabularyDump) -> Result<Self> {
        let mut tokens = Vec::with_capacity(dump.tokens.len());
        let mut counts = Vec::with_capacity(dump.tokens.len());
        let mut index = HashMap::with_capacity(dump.tokens.len());
        for (pos, e) in dump.tokens.iter().enumerate() {
            if e.id != pos {
                return Err(Error::domain(format!("vocabulary id {} at position {pos}", e.id)));
            }
            if index.insert(e.token.clone(), pos).is_some() {
                return Err(Error::domain(format!("duplicate vocabulary token {:?}", e.token)));
            }
            tokens.push(e.token.clone());
            counts.push(e.count);
        }
        let unk_id = *index
            .get(UNK_TOKEN)
            .ok_or_else(|| Error::domain("vocabulary has no <unk> entry"))?;
        let known: u64 = counts.iter().enumerate().filter(|&(i, _)| i != unk_id).map(|(_, c)| c).sum();
        if known > dump.total {
            return Err(Error::domain("vocabulary counts exceed total"));
        }
        Ok(Self {
            tokens,
            counts,
            index,
            total_tokens: dump.total,
            unk_id,
        })
    }
}

/// Keep the `max_size − 1` most frequent tokens with `count ≥ min_count`;
/// everything else folds into `<unk>`, which is ranked by its own count.
pub fn build_vocabulary<I, S>(tokens: I, max_size: usize, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if max_size < 2 {
        return Err(Error::domain("max_size must be at least 2"));
    }
    let mut freq: HashMap<String, u64> = HashMap::new();
    let mut total = 0u64;
    for t in tokens {
        total += 1;
        *freq.entry(t.as_ref().to_owned()).or_insert(0) += 1;
    }
    if total == 0 {
        return Err(Error::domain("cannot build a vocabulary from an empty token stream"));
    }
    let literal_unk = freq.remove(UNK_TOKEN).unwrap_or(0);

    let mut types: Vec<(String, u64)> = freq.into_iter().collect();
    types.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let kept: Vec<(String, u64)> = types
        .iter()
        .filter(|(_, c)| *c >= min_count)
        .take(max_size - 1)
        .cloned()
        .collect();
    let kept_total: u64 = kept.iter().map(|(_, c)| c).sum();
    let unk_count = total - kept_total;
    debug_assert!(unk_count >= literal_unk);

    let mut entries = kept;
    entries.push((UNK_TOKEN.to_owned(), unk_count));
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut index = HashMap::with_capacity(entries.len());
    let mut tok = Vec::with_capacity(entries.len());
    let mut counts = Vec::with_capacity(entries.len());
    for (i, (t, c)) in entries.into_iter().enumerate() {
        index.insert(t.clone(), i);
        tok.push(t);
        counts.push(c);
    }
    let unk_id = index[UNK_TOKEN];
    Ok(Vocabulary {
        tokens: tok,
        counts,
        index,
        total_tokens: total,
        unk_id,
    })
}

/// Token ids with sentence end markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedCorpus {
    token_ids: Vec<usize>,
    /// Exclusive end offset of each sentence; last = `token_ids.len()`.
    sentence_boundaries: Vec<usize>,
    vocab_size: usize,
}

impl EncodedCorpus {
    pub fn new(token_ids: Vec<usize>, sentence_boundaries: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if let Some(&bad) = token_ids.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::domain(format!("token id {bad} outside vocabulary of {vocab_size}")));
        }
        if sentence_boundaries.windows(2).any(|w| w[0] >= w[1])
            || sentence_boundaries.first() == Some(&0)
        {
            return Err(Error::domain("sentence boundaries must be strictly increasing and positive"));
        }
        if sentence_boundaries.last().copied().unwrap_or(0) != token_ids.len() {
            return Err(Error::domain("last sentence boundary must equal the corpus length"));
        }
        Ok(Self {
            token_ids,
            sentence_boundaries,
            vocab_size,
        })
    }

    /// One sentence per line; lines without tokens are skipped.
    pub fn from_text(text: &str, vocab: &Vocabulary) -> Self {
        let mut ids = Vec::new();
        let mut bounds = Vec::new();
        for line in text.lines() {
            let toks = tokenize(line);
            if toks.is_empty() {
                continue;
            }
            ids.extend(vocab.encode(&toks));
            bounds.push(ids.len());
        }
        Self {
            token_ids: ids,
            sentence_boundaries: bounds,
            vocab_size: vocab.len(),
        }
    }

    pub fn token_ids(&self) -> &[usize] {
        &self.token_ids
    }

    pub fn sentence_boundaries(&self) -> &[usize] {
        &self.sentence_boundaries
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn pad_id(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentence_boundaries.len()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &[usize]> + '_ {
        let starts = std::iter::once(0).chain(self.sentence_boundaries.iter().copied());
        starts
            .zip(self.sentence_boundaries.iter().copied())
            .map(move |(s, e)| &self.token_ids[s..e])
    }

    /// Split off the trailing `fraction` of sentences (rounded up) as a
    /// held-out corpus. Returns `(train, held_out)`.
    pub fn split_tail(&self, fraction: f64) -> Result<(EncodedCorpus, Option<EncodedCorpus>)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::domain(format!("validation fraction {fraction} not in [0, 1)")));
        }
        let n = self.num_sentences();
        let held = (fraction * n as f64).ceil() as usize;
        if held == 0 {
            return Ok((self.clone(), None));
        }
        if held >= n {
            return Err(Error::domain("validation split leaves no training sentences"));
        }
        let cut = self.sentence_boundaries[n - held - 1];
        let train = EncodedCorpus {
            token_ids: self.token_ids[..cut].to_vec(),
            sentence_boundaries: self.sentence_boundaries[..n - held].to_vec(),
            vocab_size: self.vocab_size,
        };
        let held_out = EncodedCorpus {
            token_ids: self.token_ids[cut..].to_vec(),
            sentence_boundaries: self.sentence_boundaries[n - held..].iter().map(|b| b - cut).collect(),
            vocab_size: self.vocab_size,
        };
        Ok((train, Some(held_out)))
    }
}

/// Relative frequencies by rank, `<unk>` excluded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub relative: Vec<f64>,
    pub total_tokens: u64,
}

impl FrequencyReport {
    /// Fraction of ranked entries whose relative frequency is strictly below
    /// `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        if self.relative.is_empty() {
            return 0.0;
        }
        let below = self.relative.iter().filter(|&&f| f < threshold).count();
        below as f64 / self.relative.len() as f64
    }
}

pub fn frequency_report(vocab: &Vocabulary) -> Result<FrequencyReport> {
    if vocab.total_tokens == 0 {
        return Err(Error::domain("frequency report needs a nonzero token total"));
    }
    let total = vocab.total_tokens as f64;
    let relative = vocab
        .counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != vocab.unk_id)
        .map(|(_, &c)| c as f64 / total)
        .collect();
    Ok(FrequencyReport {
        relative,
        total_tokens: vocab.total_tokens,
    })
}

/// Left-padded next-token windows, flattened.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextWindows {
    width: usize,
    contexts: Vec<usize>,
    targets: Vec<usize>,
    sentence_of: Vec<usize>,
}

impl ContextWindows {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn context(&self, i: usize) -> &[usize] {
        &self.contexts[i * self.width..(i + 1) * self.width]
    }

    pub fn target(&self, i: usize) -> usize {
        self.targets[i]
    }

    pub fn sentence(&self, i: usize) -> usize {
        self.sentence_of[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], usize)> + '_ {
        (0..self.len()).map(move |i| (self.context(i), self.targets[i]))
    }
}

/// One window per token: up to `width` preceding ids from the same sentence,
/// left-padded with the pad id.
pub fn context_windows(corpus: &EncodedCorpus, width: usize) -> Result<ContextWindows> {
    if width == 0 {
        return Err(Error::domain("context width must be at least 1"));
    }
    let pad = corpus.pad_id();
    let mut contexts = Vec::with_capacity(corpus.len() * width);
    let mut targets = Vec::with_capacity(corpus.len());
    let mut sentence_of = Vec::with_capacity(corpus.len());
    for (s, sent) in corpus.sentences().enumerate() {
        for t in 0..sent.len() {
            let start = t.saturating_sub(width);
            let have = t - start;
            contexts.extend(std::iter::repeat(pad).take(width - have));
            contexts.extend_from_slice(&sent[start..t]);
            targets.push(sent[t]);
            sentence_of.push(s);
        }
    }
    Ok(ContextWindows {
        width,
        contexts,
        targets,
        sentence_of,
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

/// Parameters of the synthetic Zipf–Markov corpus generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub types: usize,
    pub tokens: usize,
    pub zipf_exponent: f64,
    /// Probability that the next token follows the previous token's
    /// preferred successors rather than the unigram law.
    pub markov_weight: f64,
    pub successors: usize,
    pub min_sentence: usize,
    pub max_sentence: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            types: 2000,
            tokens: 100_000,
            zipf_exponent: 1.3,
            markov_weight: 0.5,
            successors: 4,
            min_sentence: 5,
            max_sentence: 25,
            seed: 17,
        }
    }
}

pub fn synthetic_token_name(rank: usize) -> String {
    format!("w{rank:05}")
}

/// Zipf weights `1/rᶳ` for ranks 1..=types.
pub fn zipf_weights(types: usize, exponent: f64) -> Vec<f64> {
    (1..=types).map(|r| (r as f64).powf(-exponent)).collect()
}

/// i.i.d. Zipf sample of rank indices (0-based).
pub fn sample_zipf(types: usize, exponent: f64, n: usize, seed: u64) -> Vec<usize> {
    let dist = WeightedIndex::new(zipf_weights(types, exponent)).expect("positive weights");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Line-per-sentence text whose unigram law is close to Zipf and whose
/// bigrams carry learnable structure.
pub fn synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<String> {
    if spec.types < 2 || spec.tokens == 0 || spec.min_sentence == 0 || spec.min_sentence > spec.max_sentence {
        return Err(Error::domain("invalid synthetic corpus spec"));
    }
    if !(0.0..=1.0).contains(&spec.markov_weight) || spec.successors == 0 {
        return Err(Error::domain("invalid synthetic corpus spec"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unigram = WeightedIndex::new(zipf_weights(spec.types, spec.zipf_exponent)).expect("positive weights");
    let succ: Vec<Vec<usize>> = (0..spec.types)
        .map(|_| (0..spec.successors).map(|_| unigram.sample(&mut rng)).collect())
        .collect();
    let succ_pick = WeightedIndex::new(zipf_weights(spec.successors, 1.0)).expect("positive weights");
    let names: Vec<String> = (0..spec.types).map(synthetic_token_name).collect();

    let mut out = String::new();
    let mut emitted = 0;
    while emitted < spec.tokens {
        let len = rng
            .gen_range(spec.min_sentence..=spec.max_sentence)
            .min(spec.tokens - emitted);
        let mut prev = unigram.sample(&mut rng);
        for t in 0..len {
            let tok = if t == 0 {
                prev
            } else if rng.gen::<f64>() < spec.markov_weight {
                succ[prev][succ_pick.sample(&mut rng)]
            } else {
                unigram.sample(&mut rng)
            };
            if t > 0 {
                out.push(' ');
            }
            out.push_str(&names[tok]);
            prev = tok;
        }
        out.push('\n');
        emitted += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_detaches_punctuation() {
        assert_eq!(tokenize("The cat sat."), vec!["the", "cat", "sat", "."]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a b  c").join(" "), "a b c");
        assert_eq!(tokenize("Hi,there!"), vec!["hi", ",", "there", "!"]);
    }

    #[test]
    fn vocabulary_counts_and_order() {
        let v = build_vocabulary(["a", "a", "b"], 10, 1).unwrap();
        assert_eq!(v.lookup("a"), Some(0));
        assert_eq!(v.lookup("b"), Some(1));
        assert_eq!(v.count(0), 2);
        assert_eq!(v.count(1), 1);
        assert_eq!(v.token(v.unk_id()), UNK_TOKEN);
        assert_eq!(v.count(v.unk_id()), 0);
        assert_eq!(v.pad_id(), 3);
    }

    #[test]
    fn vocabulary_truncation_keeps_single_token() {
        let v = build_vocabulary(["x", "y", "z", "z", "z", "z"], 2, 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.lookup("z"), Some(0));
        assert_eq!(v.count(v.unk_id()), 2);
        assert_eq!(v.id("y"), v.unk_id());
    }

    #[test]
    fn vocabulary_tie_break_is_lexicographic() {
        let v = build_vocabulary(["b", "a", "c", "a", "b"], 10, 1).unwrap();
        assert_eq!(v.tokens()[..3], ["a", "b", "c"]);
    }

    #[test]
    fn vocabulary_errors() {
        assert!(build_vocabulary(Vec::<&str>::new(), 10, 1).is_err());
        assert!(build_vocabulary(["a"], 1, 1).is_err());
    }

    #[test]
    fn min_count_folds_into_unk() {
        let v = build_vocabulary(["a", "a", "b"], 10, 2).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.count(v.unk_id()), 1);
    }

    #[test]
    fn frequency_report_counts() {
        let v = build_vocabulary(["a", "a", "b", "c"], 10, 1).unwrap();
        let r = frequency_report(&v).unwrap();
        assert_eq!(r.relative, vec![0.5, 0.25, 0.25]);
        assert!((r.fraction_below(0.3) - 2.0 / 3.0).abs() < 1e-15);
        let single = build_vocabulary(["q", "q"], 4, 1).unwrap();
        let r = frequency_report(&single).unwrap();
        assert_eq!(r.fraction_below(1.0), 0.0);
        assert_eq!(r.fraction_below(0.5), 0.0);
    }

    #[test]
    fn windows_pad_and_stay_in_sentence() {
        let c = EncodedCorpus::new(vec![5, 7, 9, 1, 2], vec![3, 5], 10).unwrap();
        let w = context_windows(&c, 2).unwrap();
        let got: Vec<(Vec<usize>, usize)> = w.iter().map(|(c, t)| (c.to_vec(), t)).collect();
        assert_eq!(
            got,
            vec![
                (vec![10, 10], 5),
                (vec![10, 5], 7),
                (vec![5, 7], 9),
                (vec![10, 10], 1),
                (vec![10, 1], 2),
            ]
        );
        let wide = context_windows(&c, 8).unwrap();
        assert_eq!(wide.context(2), &[10, 10, 10, 10, 10, 10, 5, 7]);
        assert!(context_windows(&c, 0).is_err());
    }

    #[test]
    fn corpus_validation() {
        assert!(EncodedCorpus::new(vec![1, 2], vec![2], 2).is_err());
        assert!(EncodedCorpus::new(vec![1, 1], vec![1, 1, 2], 3).is_err());
        assert!(EncodedCorpus::new(vec![1, 1], vec![1], 3).is_err());
    }

    #[test]
    fn split_tail_partitions_sentences() {
        let c = EncodedCorpus::new(vec![0, 1, 2, 3, 4, 5], vec![2, 3, 6], 6).unwrap();
        let (train, held) = c.split_tail(0.3).unwrap();
        let held = held.unwrap();
        assert_eq!(train.token_ids(), &[0, 1, 2]);
        assert_eq!(train.sentence_boundaries(), &[2, 3]);
        assert_eq!(held.token_ids(), &[3, 4, 5]);
        assert_eq!(held.sentence_boundaries(), &[3]);
        assert!(c.split_tail(0.0).unwrap().1.is_none());
    }

    #[test]
    fn dump_round_trip() {
        let v = build_vocabulary(tokenize("the cat sat on the mat ."), 10, 1).unwrap();
        let back = Vocabulary::from_dump(&v.to_dump()).unwrap();
        assert_eq!(back, v);
    }
}
