//! Training-free visual token reduction.
//!
//! A deterministic ViT-style [`encoder`] produces per-layer attention maps;
//! [`select`] picks pivotal tokens by contribution degree and complementary
//! tokens by attention-row outliers; [`cost`] estimates what the smaller
//! token count saves in LLM prefill.

pub mod cost;
pub mod encoder;
mod error;
pub mod matrix;
pub mod ops;
pub mod select;
pub mod stats;
pub mod tensorfile;

pub use cost::{CostReport, HardwareSpec, ModelSpec, SpeedupReport};
pub use encoder::{EncoderConfig, EncoderTrace, EncoderWeights, Image, SyntheticPattern};
pub use error::{Error, Result};
pub use matrix::{AttentionMatrix, Matrix};
pub use select::{ContributionProfile, SelectionConfig, SelectionResult, TokenKind};
pub use tensorfile::{read_tensor, write_tensor, FormatError, Tensor};
