//! Transformer-encoder text classification with pluggable mixup.
//!
//! The defining strategy is AMPLIFY: at every multi-head-attention sublayer
//! the output is duplicated, the copy is reordered by a batch permutation,
//! and the two are interpolated with one weight shared by every layer of
//! the step. That weight is the maximum of `n` draws from a U-shaped
//! `Beta(α, α)`. The loss weights the cross entropy against the original
//! and the permuted labels by the same weight.
//!
//! Baselines mix at the embedding output (EmbedMix), the pooled sentence
//! vector (SentenceMix), or one randomly chosen block output (TMix).
//!
//! ```text
//! data ──► Batch ──► model::Model::forward ──► logits ──► mixup::mixed_loss
//!                         ▲        hook sites
//!                         └── mixup::build_mixer(MixPlan)
//! ```

pub mod data;
pub mod error;
pub mod harness;
pub mod mixup;
pub mod model;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
