//! Contrastive instruction tuning for a byte-level toy transformer.
//!
//! The crate trains a small decoder-only language model with a combined
//! cross-entropy + hidden-representation contrastive objective over
//! paraphrase-positive / same-instruction-different-instance-negative
//! batches, then measures robustness to character, word, sentence and
//! semantic instruction perturbations. Everything is seeded and runs in
//! f64 on one CPU core; two runs with the same seed produce byte-identical
//! artifacts.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod perturb;
pub mod pipeline;
pub mod rng;

pub use error::Error;
pub use rng::Stream;
