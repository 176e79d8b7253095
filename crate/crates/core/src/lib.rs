//! Multi-modal transformer for query-driven moment retrieval and highlight
//! detection over pre-extracted video and audio clip features.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: tensors and a reverse-mode tape with finite-difference checks
//! - [`embeddings`]: input projection and 2-D sine-cosine positional encoding
//! - [`attention`]: multi-head attention with persistent memory slots and the
//!   encoder, cross-modal and decoder layers built from it
//! - [`model`]: the full pipeline, Hungarian set matching and training loss
//! - [`optim`]: Lion and AdamW
//! - [`metrics`]: temporal IoU, AP / mAP sweeps, Recall@K, top-5 mAP, HIT@1
//! - [`data`]: JSONL feature datasets, stream synchronization, synthetic data
//! - [`run`]: training, evaluation, checkpoints and loss curves

pub mod attention;
pub mod data;
pub mod embeddings;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod params;
pub mod rng;
pub mod run;

pub use error::{Error, Result};
pub use numerics::{Graph, Mode, Tensor, Var};
