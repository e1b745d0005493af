//! The byte-level decoder-only toy transformer.
//!
//! Pre-norm blocks with learned positional embeddings, tanh feed-forward,
//! and a final layer norm feeding the unembedding. Small enough to train
//! with plain SGD in f64 on one core; every parameter is initialized
//! uniformly in [-0.08, 0.08] from a per-parameter named stream so the
//! initialization does not depend on parameter ordering.

mod tokenizer;
mod transformer;

pub use tokenizer::{
    detokenize, render_prompt_sequence, render_training_sequence, tokenize, TokenSequence, BOS,
    EOS, PAD, SEP, VOCAB_SIZE,
};
pub use transformer::{
    forward, greedy_generate, hidden_states, last_token_hidden, logits_for_rows,
    next_token_logits,
};

use crate::autodiff::{BoundParams, Tape, Tensor};
use crate::rng::Stream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("sequence needs {needed} tokens for its untruncatable regions but context is {context_len}")]
    SequenceTooLong { needed: usize, context_len: usize },
    #[error("training sequences require a non-empty output")]
    EmptyOutput,
    #[error("sequence of {len} tokens exceeds context length {context_len}; caller must truncate")]
    ContextExceeded { len: usize, context_len: usize },
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub context_len: usize,
}

impl ModelConfig {
    /// Desk-scale default: 4 layers, d_model 64.
    pub fn desk_default() -> Self {
        ModelConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            vocab_size: VOCAB_SIZE,
            context_len: 256,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(ModelError::BadConfig("all dimensions must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size != VOCAB_SIZE {
            return Err(ModelError::BadConfig(format!(
                "vocab_size is fixed at {VOCAB_SIZE}, got {}",
                self.vocab_size
            )));
        }
        if self.context_len < 8 {
            return Err(ModelError::BadConfig(format!(
                "context_len must be at least 8, got {}",
                self.context_len
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Named model parameters in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    config: ModelConfig,
    entries: Vec<(String, Tensor)>,
}

impl Params {
    /// Seeded uniform init in [-INIT_RANGE, INIT_RANGE]. Each array draws
    /// from a stream derived from its own name.
    pub fn init(config: &ModelConfig, seed_stream: &Stream) -> Result<Self, ModelError> {
        config.validate()?;
        let (d, ff, v, ctx) = (config.d_model, config.d_ff, config.vocab_size, config.context_len);
        let mut shapes: Vec<(String, Vec<usize>)> = vec![
            ("embed.tok".into(), vec![v, d]),
            ("embed.pos".into(), vec![ctx, d]),
        ];
        for l in 0..config.n_layers {
            for part in ["ln1.gamma", "ln1.beta"] {
                shapes.push((format!("layer{l}.{part}"), vec![1, d]));
            }
            for part in ["wq", "wk", "wv", "wo"] {
                shapes.push((format!("layer{l}.attn.{part}"), vec![d, d]));
            }
            for part in ["bq", "bk", "bv", "bo"] {
                shapes.push((format!("layer{l}.attn.{part}"), vec![1, d]));
            }
            for part in ["ln2.gamma", "ln2.beta"] {
                shapes.push((format!("layer{l}.{part}"), vec![1, d]));
            }
            shapes.push((format!("layer{l}.ffn.w1"), vec![d, ff]));
            shapes.push((format!("layer{l}.ffn.b1"), vec![1, ff]));
            shapes.push((format!("layer{l}.ffn.w2"), vec![ff, d]));
            shapes.push((format!("layer{l}.ffn.b2"), vec![1, d]));
        }
        shapes.push(("ln_f.gamma".into(), vec![1, d]));
        shapes.push(("ln_f.beta".into(), vec![1, d]));
        shapes.push(("unembed.w".into(), vec![d, v]));
        shapes.push(("unembed.b".into(), vec![1, v]));

        let entries = shapes
            .into_iter()
            .map(|(name, shape)| {
                let mut s = seed_stream.derive("init").derive(&name);
                let numel = shape.iter().product();
                let data: Vec<f64> =
                    (0..numel).map(|_| s.uniform(-INIT_RANGE, INIT_RANGE)).collect();
                let t = Tensor::new(shape, data).expect("shape matches generated data");
                (name, t)
            })
            .collect();
        Ok(Params { config: config.clone(), entries })
    }

    pub fn from_entries(
        config: ModelConfig,
        entries: Vec<(String, Tensor)>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Params { config, entries })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    /// Registers every parameter on `tape`; `tracked` decides whether
    /// gradients flow.
    pub fn bind(&self, tape: &mut Tape, tracked: bool) -> BoundParams {
        BoundParams::bind(tape, &self.entries, tracked)
    }

    /// One plain SGD step: `θ -= lr * g` for every named gradient.
    pub fn sgd_step(&mut self, grads: &[(String, Tensor)], lr: f64) {
        for (name, g) in grads {
            let t = self
                .entries
                .iter_mut()
                .find(|(n, _)| n == name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
            for (w, gi) in t.1.data_mut().iter_mut().zip(g.data()) {
                *w -= lr * gi;
            }
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}
