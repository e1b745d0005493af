//! Run configuration, file formats, checkpointing, the training loop and
//! the command-level entry points behind the CLI.

mod checkpoint;
mod commands;
mod io;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use commands::{
    cmd_augment, cmd_eval, cmd_perturb, cmd_project, cmd_train, AugmentArgs, AugmentStats,
    EvalArgs, EvalReportFile, GroupFileRow, PerturbArgs, ProjectArgs, TrainArgs, TrainStats,
};
pub use io::{read_jsonl, write_jsonl, write_text_atomic};
pub use train::{train, StepLog, TrainHook, TrainOutcome};

use crate::model::ModelConfig;
use crate::objectives::CapMode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed JSON row: {detail}")]
    Json { path: String, line: usize, detail: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("config file {path}:{line}: unknown key {key:?}")]
    UnknownKey { path: String, line: usize, key: String },
    #[error("checkpoint {path}: bad magic (not a model checkpoint)")]
    BadMagic { path: String },
    #[error("checkpoint {path}: format version {found}, this build reads version {expected}")]
    Version { path: String, found: u32, expected: u32 },
    #[error("checkpoint {path}: stored config hash {stored:#018x} does not match recomputed {computed:#018x}")]
    HashMismatch { path: String, stored: u64, computed: u64 },
    #[error("checkpoint {path}: file ends early ({detail})")]
    ShortRead { path: String, detail: String },
    #[error("checkpoint {path}: corrupt: {detail}")]
    Corrupt { path: String, detail: String },
    #[error("training aborted: {0}")]
    TrainAbort(String),
    #[error("{count} evaluation instruction(s) appear in the training renderings: {sample:?}")]
    UnseenInstructionViolation { count: usize, sample: Vec<String> },
    #[error("task {task} is missing its {group} instruction group")]
    MissingGroup { task: String, group: String },
    #[error("{0}")]
    Invalid(String),
}

/// Everything a training or evaluation run needs to be reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops training after this many steps regardless of epochs.
    pub max_steps: Option<usize>,
    pub tau: f64,
    pub lambda_cap: f64,
    pub cap_mode: CapMode,
    /// Cross-entropy-only baseline: identical batch stream, contrastive
    /// term skipped entirely.
    pub baseline_ce: bool,
    /// Also average the positives' cross-entropy into each anchor's
    /// generation loss.
    pub ent_on_positives: bool,
    /// Also use other anchors' positives as in-batch negatives.
    pub include_positive_negatives: bool,
    pub save_every: Option<usize>,
    /// Generation budget per prediction during evaluation.
    pub max_new: usize,
    pub model: ModelConfig,
}

impl RunConfig {
    /// Desk-scale defaults; the paper-scale values (batch 64) are one flag
    /// away.
    pub fn desk_default(seed: u64) -> Self {
        RunConfig {
            seed,
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 3,
            max_steps: None,
            tau: 0.05,
            lambda_cap: 1000.0,
            cap_mode: CapMode::CapAbove,
            baseline_ce: false,
            ent_on_positives: false,
            include_positive_negatives: false,
            save_every: None,
            max_new: 16,
            model: ModelConfig::desk_default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.tau <= 0.0 {
            return Err(PipelineError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.lambda_cap <= 0.0 {
            return Err(PipelineError::Config(format!(
                "lambda_cap must be positive, got {}",
                self.lambda_cap
            )));
        }
        if self.batch_size < 2 {
            return Err(PipelineError::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(PipelineError::Config("learning_rate must be positive".into()));
        }
        if self.max_new == 0 {
            return Err(PipelineError::Config("max_new must be positive".into()));
        }
        self.model.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Canonical JSON used for the checkpoint config hash and config echo.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Applies one `key = value` assignment.
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(value: &str, what: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| format!("bad {what} value {value:?}: {e}"))
        }
        match key {
            "seed" => self.seed = parse(value, "seed")?,
            "learning_rate" => self.learning_rate = parse(value, "learning_rate")?,
            "batch_size" => self.batch_size = parse(value, "batch_size")?,
            "epochs" => self.epochs = parse(value, "epochs")?,
            "max_steps" => self.max_steps = Some(parse(value, "max_steps")?),
            "tau" => self.tau = parse(value, "tau")?,
            "lambda_cap" => self.lambda_cap = parse(value, "lambda_cap")?,
            "cap_mode" => self.cap_mode = parse(value, "cap_mode")?,
            "baseline_ce" => self.baseline_ce = parse(value, "baseline_ce")?,
            "ent_on_positives" => self.ent_on_positives = parse(value, "ent_on_positives")?,
            "include_positive_negatives" => {
                self.include_positive_negatives = parse(value, "include_positive_negatives")?
            }
            "save_every" => self.save_every = Some(parse(value, "save_every")?),
            "max_new" => self.max_new = parse(value, "max_new")?,
            "n_layers" => self.model.n_layers = parse(value, "n_layers")?,
            "n_heads" => self.model.n_heads = parse(value, "n_heads")?,
            "d_model" => self.model.d_model = parse(value, "d_model")?,
            "d_ff" => self.model.d_ff = parse(value, "d_ff")?,
            "context_len" => self.model.context_len = parse(value, "context_len")?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Parses a `key = value` config file (UTF-8; `#` comments and blank
    /// lines allowed) over these settings. Unknown keys are errors.
    pub fn apply_config_text(&mut self, text: &str, path: &str) -> Result<(), PipelineError> {
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("{path}:{line_no}: expected key = value, got {raw:?}"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            self.set(key, value).map_err(|detail| {
                if detail.starts_with("unknown key") {
                    PipelineError::UnknownKey { path: path.to_string(), line: line_no, key: key.to_string() }
                } else {
                    PipelineError::Config(format!("{path}:{line_no}: {detail}"))
                }
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_roundtrip() {
        let mut cfg = RunConfig::desk_default(0);
        cfg.apply_config_text(
            "# comment\nseed = 9\nlearning_rate = 0.05\ncap_mode = paper-literal\nd_model = 32\n",
            "test.cfg",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.learning_rate, 0.05);
        assert_eq!(cfg.cap_mode, CapMode::PaperLiteral);
        assert_eq!(cfg.model.d_model, 32);
    }

    #[test]
    fn unknown_config_key_is_an_error() {
        let mut cfg = RunConfig::desk_default(0);
        let err = cfg.apply_config_text("bogus = 1\n", "test.cfg").unwrap_err();
        assert!(matches!(err, PipelineError::UnknownKey { key, .. } if key == "bogus"));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = RunConfig::desk_default(0);
        cfg.lambda_cap = 0.0;
        assert!(cfg.validate().is_err());
        cfg.lambda_cap = 1000.0;
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        cfg.batch_size = 8;
        cfg.tau = -0.05;
        assert!(cfg.validate().is_err());
    }
}
