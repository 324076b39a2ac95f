//! Tabular in-context learning at desk scale.
//!
//! The pipeline embeds each table column with a shared Set Transformer, mixes
//! features per row with multi-scale block-sparse attention, refines rows
//! through a write/read latent memory that only training rows may write, and
//! predicts test labels with a split-masked in-context transformer — all on a
//! small reverse-mode autodiff engine, trained on synthetic causal-model data.

pub mod error;
pub mod nn;
pub mod tape;
pub mod tensor;

pub use error::{ModelError, Result, TensorError};
pub use tape::{Tape, VarId};
pub use tensor::Tensor;
