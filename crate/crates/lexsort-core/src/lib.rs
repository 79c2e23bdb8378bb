//! Two-level classification of legal documents at desk scale.
//!
//! The crate compares three routes to the same task — a bespoke ensemble of an
//! n-gram bag-of-words network and an attention CNN, a prompt-only chat-model
//! classifier, and a fine-tuned chat model — and ships everything needed to run
//! the comparison offline: a synthetic corpus generator with label noise,
//! from-scratch trainable models, Shapley token attributions, an
//! OpenAI-compatible HTTP client with a scriptable mock endpoint, and an
//! evaluation harness (metrics, context-window search, learning curves).
//!
//! Modules:
//!
//! - [`corpus`] — document/label data model, synthetic generation, label noise,
//!   splits, JSONL persistence
//! - [`featurize`] — tokenization, context-window truncation, n-gram vocabulary
//!   and sparse frequency vectors
//! - [`bow`] — single-hidden-layer softmax network over sparse features
//! - [`cnn`] — embedding + 1-D convolution + attention-pooling classifier
//! - [`ensemble`] — branch combination, prediction, model bundle serialization
//! - [`explain`] — exact and sampled Shapley values with text overlays
//! - [`llm`] — chat-completion client, prompt construction, label validation,
//!   fine-tune file builder, mock endpoint
//! - [`eval`] — metrics, hyperparameter search, learning curves, report files

pub mod bow;
pub mod cnn;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod explain;
pub mod featurize;
mod num;
pub mod llm;

pub use corpus::{BinaryLabel, CorpusSpec, Dataset, Document, Label, LabelTaxonomy, Subclass, Task};
pub use error::{Error, Result};
pub use featurize::{FeatureVector, TokenSequence, Vocab};
