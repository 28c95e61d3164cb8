//! Joint rumor stance and veracity classification.
//!
//! The pipeline runs from RumorEval-style conversation threads to per-post
//! stance labels and a per-thread veracity label:
//!
//! * [`corpus`] ingests threads and builds synthetic fixture corpora,
//! * [`preprocess`] normalizes text and lays a whole conversation out as one
//!   token sequence with a `[CLS]` marker per post,
//! * [`features`] computes the 441-dimension linguistic feature vector per post,
//! * [`tensor`] is a small reverse-mode differentiation engine with banded
//!   (sliding-window) multi-head attention,
//! * [`model`] assembles the conversation encoder, sentence encoders and the
//!   two classification heads,
//! * [`training`] runs joint training with two scheduled Adam optimizers,
//! * [`ensemble`] performs greedy Top-N_s fusion over a pool of checkpoints,
//! * [`eval`] scores predictions with macro-F1 and veracity RMSE.

// Index loops mirror the math in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod matrix_file;
pub mod model;
pub mod preprocess;
pub mod tensor;
pub mod training;

pub use corpus::{ConversationThread, Dataset, Platform, Post, Split, Stance, Veracity};
pub use error::{Error, Result};
pub use features::FeatureVector;
pub use model::{EncoderConfig, EncoderKind, Model};
pub use preprocess::{TokenizedThread, Vocabulary};
pub use tensor::{Graph, Tensor, Var};
