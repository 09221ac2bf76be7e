//! Argument quality scoring with LLM-generated context.
//!
//! Pipeline: load a corpus ([`corpus`]), generate feedback / assumptions /
//! similar-quality / counter-argument texts ([`augment`]), train a dual
//! encoder with cross-attention fusion and three regression heads
//! ([`model`], [`train`]), and report Pearson / Spearman correlations
//! ([`eval`]). [`synth`] builds a synthetic corpus whose labels are only
//! recoverable from the augmentation text.

pub mod augment;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod synth;
pub mod train;
