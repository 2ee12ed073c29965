use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DEFAULT_PAIR_CAP, DEFAULT_RARE_QUANTILE};
use crate::model::{OptimizerKind, TrainConfig};
use crate::theory::negdir::{DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use crate::theory::perturbation::check_perturbation_params;

use super::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Plain text, one sentence per line.
    pub path: Option<PathBuf>,
    pub max_vocab: usize,
    pub min_count: u64,
    /// Trailing fraction of sentences held out for validation.
    pub validation_fraction: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            path: None,
            max_vocab: 2000,
            min_count: 1,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub embedding_dim: usize,
    pub context_width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// One run per entry, all sharing `seed`.
    pub gammas: Vec<f64>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub use_layer_norm: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            embedding_dim: t.embedding_dim,
            context_width: t.context_width,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            gammas: vec![0.0, 1.0],
            seed: t.seed,
            optimizer: t.optimizer,
            use_layer_norm: t.use_layer_norm,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, gamma: f64) -> TrainConfig {
        TrainConfig {
            embedding_dim: self.embedding_dim,
            context_width: self.context_width,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            gamma,
            seed: self.seed,
            optimizer: self.optimizer,
            use_layer_norm: self.use_layer_norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Checkpoints to analyze; empty means every checkpoint written by `train`.
    pub checkpoints: Vec<PathBuf>,
    pub rare_quantile: f64,
    pub pair_cap: usize,
    pub seed: u64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            rare_quantile: DEFAULT_RARE_QUANTILE,
            pair_cap: DEFAULT_PAIR_CAP,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationCase {
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub epsilon: f64,
    pub dimension: usize,
}

impl Default for PerturbationCase {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 0.5,
            b: 0.5,
            epsilon: 0.1,
            dimension: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub seed: u64,
    pub regularizer: bool,
    pub gram: bool,
    pub negative_direction: bool,
    pub extreme_case: bool,
    pub perturbation: bool,
    pub layer_norm: bool,
    pub regularizer_matrices: usize,
    pub gram_matrices: usize,
    pub instances_2d: usize,
    pub instances_highdim: usize,
    pub perturbation_cases: usize,
    pub perturbation_case: PerturbationCase,
    pub extreme_steps: usize,
    pub extreme_lr: f64,
    pub hull_tolerance: f64,
    pub hull_max_iters: usize,
    /// Optional trained checkpoint for the hidden-state layer-norm check.
    pub checkpoint: Option<PathBuf>,
    pub hidden_state_cap: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            seed: 2024,
            regularizer: true,
            gram: true,
            negative_direction: true,
            extreme_case: true,
            perturbation: true,
            layer_norm: true,
            regularizer_matrices: 200,
            gram_matrices: 50,
            instances_2d: 100,
            instances_highdim: 50,
            perturbation_cases: 50,
            perturbation_case: PerturbationCase::default(),
            extreme_steps: 10_000,
            extreme_lr: 0.1,
            hull_tolerance: DEFAULT_TOLERANCE,
            hull_max_iters: DEFAULT_MAX_ITERS,
            checkpoint: None,
            hidden_state_cap: 2000,
        }
    }
}

impl ExperimentConfig {
    /// Reads, validates and resolves relative paths against the config
    /// file's directory. `out` overrides `output_dir`.
    pub fn load(path: &Path, out: Option<&Path>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
        let base = absolute(parent.unwrap_or(Path::new(".")))?;
        cfg.resolve(&base);
        if let Some(o) = out {
            cfg.output_dir = absolute(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.corpus.path.as_mut() {
            fix(p);
        }
        self.diagnostics.checkpoints.iter_mut().for_each(fix);
        if let Some(p) = self.verify.checkpoint.as_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let c = &self.corpus;
        if c.max_vocab < 2 {
            return Err(CliError::config("corpus.max_vocab must be at least 2"));
        }
        if !(0.0..1.0).contains(&c.validation_fraction) {
            return Err(CliError::config("corpus.validation_fraction must lie in [0, 1)"));
        }
        if self.train.gammas.is_empty() {
            return Err(CliError::config("train.gammas must list at least one value"));
        }
        for &g in &self.train.gammas {
            self.train
                .train_config(g)
                .validate()
                .map_err(|e| CliError::config(format!("train: {e}")))?;
        }
        let d = &self.diagnostics;
        if !(0.0..=1.0).contains(&d.rare_quantile) {
            return Err(CliError::config("diagnostics.rare_quantile must lie in [0, 1]"));
        }
        if d.pair_cap == 0 {
            return Err(CliError::config("diagnostics.pair_cap must be positive"));
        }
        let v = &self.verify;
        let p = &v.perturbation_case;
        check_perturbation_params(p.alpha, p.beta, p.b, p.epsilon)
            .map_err(|e| CliError::config(format!("verify.perturbation_case: {e}")))?;
        if p.dimension == 0 {
            return Err(CliError::config("verify.perturbation_case.dimension must be positive"));
        }
        if !(v.hull_tolerance > 0.0) || !(v.extreme_lr > 0.0) {
            return Err(CliError::config("verify tolerances and learning rates must be positive"));
        }
        Ok(())
    }
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
}
