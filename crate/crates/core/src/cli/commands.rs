use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{build_vocabulary, frequency_report, tokenize, EncodedCorpus, Vocabulary, VocabularyDump};
use crate::diagnostics::{degeneration_report, project_2d, singular_spectrum, DegenerationReport};
use crate::error::Error;
use crate::model::{train, Checkpoint, EpochMetrics};

use super::{
    echo_config, write_csv, write_json, CliError, ExperimentConfig, EXIT_CORRUPT_CHECKPOINT, EXIT_EMPTY_CORPUS,
    EXIT_MISSING_INPUT,
};

pub const FREQUENCY_THRESHOLDS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Serialize)]
struct RankedFrequency<'a> {
    rank: usize,
    token: &'a str,
    relative_frequency: f64,
}

#[derive(Debug, Serialize)]
struct ThresholdFraction {
    threshold: f64,
    fraction: f64,
}

#[derive(Debug, Serialize)]
struct FrequencyFile<'a> {
    total_tokens: u64,
    vocab_size: usize,
    ranked: Vec<RankedFrequency<'a>>,
    fraction_below: Vec<ThresholdFraction>,
}

/// Paths written by a command, for the caller to report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
}

fn corpus_text(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let path = cfg
        .corpus
        .path
        .as_ref()
        .ok_or_else(|| CliError::config("corpus.path is required"))?;
    std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))
}

pub fn cmd_ingest(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let text = corpus_text(cfg)?;
    let tokens: Vec<String> = text.lines().flat_map(tokenize).collect();
    if tokens.is_empty() {
        return Err(CliError::new(EXIT_EMPTY_CORPUS, "corpus contains no tokens"));
    }
    let vocab = build_vocabulary(&tokens, cfg.corpus.max_vocab, cfg.corpus.min_count)?;
    let freq = frequency_report(&vocab)?;

    let ranked = (0..vocab.len())
        .filter(|&i| i != vocab.unk_id())
        .zip(&freq.relative)
        .enumerate()
        .map(|(r, (id, &f))| RankedFrequency {
            rank: r + 1,
            token: vocab.token(id),
            relative_frequency: f,
        })
        .collect();
    let file = FrequencyFile {
        total_tokens: freq.total_tokens,
        vocab_size: vocab.len(),
        ranked,
        fraction_below: FREQUENCY_THRESHOLDS
            .iter()
            .map(|&t| ThresholdFraction {
                threshold: t,
                fraction: freq.fraction_below(t),
            })
            .collect(),
    };

    let out = &cfg.output_dir;
    let vocab_path = out.join("vocab.json");
    let freq_path = out.join("freq.json");
    write_json(&vocab_path, &vocab.to_dump())?;
    write_json(&freq_path, &file)?;
    let cfg_path = echo_config(cfg, "ingest")?;
    Ok(CommandOutput {
        files: vec![vocab_path, freq_path, cfg_path],
    })
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
    let dump: VocabularyDump = serde_json::from_str(&text)
        .map_err(|e| CliError::new(EXIT_MISSING_INPUT, format!("{}: not a vocabulary: {e}", path.display())))?;
    Ok(Vocabulary::from_dump(&dump)?)
}

pub fn gamma_label(gamma: f64) -> String {
    format!("gamma_{gamma}")
}

pub fn checkpoint_path(cfg: &ExperimentConfig, gamma: f64) -> PathBuf {
    cfg.output_dir.join(format!("checkpoint_{}.json", gamma_label(gamma)))
}

#[derive(Debug, Serialize)]
struct RunMetrics {
    gamma: f64,
    checkpoint: String,
    epochs: Vec<EpochMetrics>,
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    runs: Vec<RunMetrics>,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let vocab = load_vocabulary(&cfg.output_dir.join("vocab.json"))?;
    let text = corpus_text(cfg)?;
    let corpus = EncodedCorpus::from_text(&text, &vocab);
    if corpus.is_empty() {
        return Err(CliError::new(EXIT_EMPTY_CORPUS, "corpus contains no tokens"));
    }
    let (train_part, valid_part) = corpus.split_tail(cfg.corpus.validation_fraction)?;
    if train_part.is_empty() {
        return Err(CliError::new(EXIT_EMPTY_CORPUS, "no training sentences left after the validation split"));
    }

    let outcomes: Vec<_> = cfg
        .train
        .gammas
        .par_iter()
        .map(|&g| {
            let tc = cfg.train.train_config(g);
            train(&tc, &train_part, &vocab, valid_part.as_ref()).map(|o| (tc, o))
        })
        .collect::<Result<_, Error>>()?;

    let mut files = Vec::new();
    let mut runs = Vec::new();
    for (tc, outcome) in outcomes {
        let path = checkpoint_path(cfg, tc.gamma);
        let ck = Checkpoint::new(tc.clone(), &vocab, outcome.params);
        write_json(&path, &ck)?;
        runs.push(RunMetrics {
            gamma: tc.gamma,
            checkpoint: path.display().to_string(),
            epochs: outcome.metrics,
        });
        files.push(path);
    }
    let metrics_path = cfg.output_dir.join("metrics.json");
    write_json(&metrics_path, &MetricsFile { runs })?;
    files.push(metrics_path);
    files.push(echo_config(cfg, "train")?);
    Ok(CommandOutput { files })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
    Checkpoint::from_json(&text)
        .map_err(|e| CliError::new(EXIT_CORRUPT_CHECKPOINT, format!("{}: corrupt checkpoint: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct GeometryFile {
    checkpoint: String,
    gamma: f64,
    /// `σ₂/σ₁` of the raw embedding matrix.
    normalized_sigma2: f64,
    projection_energy: f64,
    report: DegenerationReport,
}

#[derive(Debug, Serialize)]
struct ProjectionRow<'a> {
    token: &'a str,
    x: f64,
    y: f64,
    frequency_rank: usize,
}

pub fn cmd_diagnose(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let checkpoints: Vec<PathBuf> = if cfg.diagnostics.checkpoints.is_empty() {
        cfg.train.gammas.iter().map(|&g| checkpoint_path(cfg, g)).collect()
    } else {
        cfg.diagnostics.checkpoints.clone()
    };
    let d = &cfg.diagnostics;
    let mut files = Vec::new();
    for path in &checkpoints {
        let ck = load_checkpoint(path)?;
        let vocab = ck
            .vocabulary()
            .map_err(|e| CliError::new(EXIT_CORRUPT_CHECKPOINT, format!("{}: {e}", path.display())))?;
        let w = &ck.params.embedding;
        let report = degeneration_report(w, &vocab, d.rare_quantile, d.pair_cap, d.seed)?;
        let projection = project_2d(w)?;
        let spectrum = singular_spectrum(w)?;

        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
        let label = stem.strip_prefix("checkpoint_").unwrap_or(stem);
        let geo_path = cfg.output_dir.join(format!("geometry_{label}.json"));
        let proj_path = cfg.output_dir.join(format!("projection_{label}.csv"));
        let spec_path = cfg.output_dir.join(format!("spectrum_{label}.csv"));

        write_json(
            &geo_path,
            &GeometryFile {
                checkpoint: path.display().to_string(),
                gamma: ck.config.gamma,
                normalized_sigma2: spectrum.get(1).copied().unwrap_or(0.0),
                projection_energy: projection.explained_energy,
                report,
            },
        )?;
        let coords = &projection.coordinates;
        write_csv(
            &proj_path,
            &["token", "x", "y", "frequency_rank"],
            (0..vocab.len()).map(|i| ProjectionRow {
                token: vocab.token(i),
                x: coords.get(i, 0),
                y: coords.get(i, 1),
                frequency_rank: i + 1,
            }),
        )?;
        write_csv(
            &spec_path,
            &["index", "normalized_sigma"],
            spectrum.iter().enumerate().map(|(i, s)| (i + 1, *s)),
        )?;
        files.extend([geo_path, proj_path, spec_path]);
    }
    files.push(echo_config(cfg, "diagnose")?);
    Ok(CommandOutput { files })
}
