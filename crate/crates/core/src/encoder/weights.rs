use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl LayerNormParams {
    fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub ln1: LayerNormParams,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2: LayerNormParams,
    pub w1: Matrix,
    pub w2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    /// `patch_dim × dim`
    pub patch_embed: Matrix,
    /// `tokens × dim`; `None` when positional embeddings are disabled.
    pub pos_embed: Option<Matrix>,
    pub blocks: Vec<BlockWeights>,
}

/// Draws every parameter from one ChaCha8 stream seeded by `config.seed`.
///
/// Draw order is fixed: patch projection, positional table (always drawn, so
/// toggling it leaves later weights unchanged), then per block
/// `wq, wk, wv, wo, w1, w2`. Norms start at γ = 1, β = 0.
pub fn init_weights(config: &EncoderConfig) -> Result<EncoderWeights> {
    config.validate()?;
    let normal = Normal::new(0.0f32, config.init_std)
        .map_err(|e| Error::config(format!("encoder.init_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |rows: usize, cols: usize| {
        let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        Matrix::from_parts(rows, cols, data)
    };
    let d = config.dim;
    let patch_embed = draw(config.patch_dim(), d);
    let pos = draw(config.tokens(), d);
    let blocks = (0..config.layers)
        .map(|_| BlockWeights {
            ln1: LayerNormParams::identity(d),
            wq: draw(d, d),
            wk: draw(d, d),
            wv: draw(d, d),
            wo: draw(d, d),
            ln2: LayerNormParams::identity(d),
            w1: draw(d, config.ffn_dim),
            w2: draw(config.ffn_dim, d),
        })
        .collect();
    Ok(EncoderWeights {
        patch_embed,
        pos_embed: config.positional_embeddings.then_some(pos),
        blocks,
    })
}
