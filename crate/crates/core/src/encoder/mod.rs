//! A small deterministic ViT-style encoder that records per-layer attention.
//!
//! Blocks are pre-norm: `x += MHSA(LN(x))`, then `x += FFN(LN(x))`. Each
//! layer's per-head attention maps are averaged into one row-stochastic
//! matrix. There is no class token, so trace index `i` is patch `i` in
//! row-major grid order.

mod config;
mod image;
mod weights;

pub use config::EncoderConfig;
pub use image::{Image, SyntheticPattern};
pub use weights::{init_weights, BlockWeights, EncoderWeights, LayerNormParams};

use crate::error::{Error, Result};
use crate::matrix::{AttentionMatrix, Matrix};
use crate::ops::{attention, ffn, layer_norm, matmul};

/// Attention maps and final embeddings from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrace {
    attention: Vec<AttentionMatrix>,
    embeddings: Matrix,
}

impl EncoderTrace {
    /// Checks that every map is `n×n` for the same `n` and that
    /// `embeddings` has `n` rows.
    pub fn new(attention: Vec<AttentionMatrix>, embeddings: Matrix) -> Result<Self> {
        let n = attention
            .first()
            .ok_or(Error::Empty("EncoderTrace::new"))?
            .n();
        if let Some((l, a)) = attention.iter().enumerate().find(|(_, a)| a.n() != n) {
            return Err(Error::shape(
                "EncoderTrace::new",
                format!("layer {l} has {} tokens, layer 0 has {n}", a.n()),
            ));
        }
        if embeddings.rows() != n {
            return Err(Error::shape(
                "EncoderTrace::new",
                format!("{} embedding rows for {n} tokens", embeddings.rows()),
            ));
        }
        Ok(Self {
            attention,
            embeddings,
        })
    }

    pub fn attention(&self) -> &[AttentionMatrix] {
        &self.attention
    }

    pub fn layer(&self, l: usize) -> &AttentionMatrix {
        &self.attention[l]
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn num_layers(&self) -> usize {
        self.attention.len()
    }

    pub fn tokens(&self) -> usize {
        self.embeddings.rows()
    }

    /// Relabels tokens so that new token `i` is old token `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.tokens();
        let mut seen = vec![false; n];
        if perm.len() != n
            || !perm
                .iter()
                .all(|&p| p < n && !std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::shape(
                "EncoderTrace::permuted",
                format!("not a permutation of 0..{n}"),
            ));
        }
        let attention = self
            .attention
            .iter()
            .map(|a| {
                let mut data = Vec::with_capacity(n * n);
                for &pi in perm {
                    data.extend(perm.iter().map(|&pj| a.get(pi, pj)));
                }
                AttentionMatrix::from_softmax(Matrix::from_parts(n, n, data))
            })
            .collect();
        let d = self.embeddings.cols();
        let mut emb = Vec::with_capacity(n * d);
        for &pi in perm {
            emb.extend_from_slice(self.embeddings.row(pi));
        }
        Ok(Self {
            attention,
            embeddings: Matrix::from_parts(n, d, emb),
        })
    }
}

/// Cuts `image` into `patch_size²·C`-wide rows in row-major grid order.
/// Each row runs over (dy, dx, channel).
pub fn patchify(image: &Image, config: &EncoderConfig) -> Result<Matrix> {
    let size = config.image_size;
    if image.height() != size || image.width() != size || image.channels() != config.channels {
        return Err(Error::shape(
            "patchify",
            format!(
                "image is {}x{}x{}, config expects {size}x{size}x{}",
                image.height(),
                image.width(),
                image.channels(),
                config.channels
            ),
        ));
    }
    let p = config.patch_size;
    let grid = config.grid();
    let mut data = Vec::with_capacity(size * size * config.channels);
    for t in 0..grid * grid {
        let (gy, gx) = (t / grid, t % grid);
        for dy in 0..p {
            let y = gy * p + dy;
            let start = (y * size + gx * p) * config.channels;
            data.extend_from_slice(&image.as_slice()[start..start + p * config.channels]);
        }
    }
    Ok(Matrix::from_parts(grid * grid, config.patch_dim(), data))
}

/// Runs the encoder on an image.
pub fn forward(
    image: &Image,
    weights: &EncoderWeights,
    config: &EncoderConfig,
) -> Result<EncoderTrace> {
    let patches = patchify(image, config)?;
    forward_patches(&patches, weights, config)
}

/// Runs the encoder on already-patchified rows (`tokens × patch_dim`).
pub fn forward_patches(
    patches: &Matrix,
    weights: &EncoderWeights,
    config: &EncoderConfig,
) -> Result<EncoderTrace> {
    config.validate()?;
    if weights.blocks.len() != config.layers {
        return Err(Error::shape(
            "forward",
            format!(
                "{} weight blocks for {} layers",
                weights.blocks.len(),
                config.layers
            ),
        ));
    }
    let normalised = Matrix::new(
        patches.rows(),
        patches.cols(),
        patches
            .as_slice()
            .iter()
            .map(|v| (v - config.pixel_mean) / config.pixel_std)
            .collect(),
    )?;
    let mut x = matmul(&normalised, &weights.patch_embed)?;
    if let Some(pos) = &weights.pos_embed {
        x = x.add(pos)?;
    }

    let heads = config.heads;
    let dk = config.head_dim();
    let eps = config.layer_norm_eps;
    let mut maps = Vec::with_capacity(config.layers);
    for block in &weights.blocks {
        let h = layer_norm(&x, &block.ln1.gamma, &block.ln1.beta, eps)?;
        let q = matmul(&h, &block.wq)?;
        let k = matmul(&h, &block.wk)?;
        let v = matmul(&h, &block.wv)?;
        let mut head_maps = Vec::with_capacity(heads);
        let mut head_out = Vec::with_capacity(heads);
        for head in 0..heads {
            let (s, e) = (head * dk, (head + 1) * dk);
            let (a, y) = attention(&q.columns(s, e)?, &k.columns(s, e)?, &v.columns(s, e)?, dk)?;
            head_maps.push(a);
            head_out.push(y);
        }
        let attn = matmul(&Matrix::hstack(&head_out)?, &block.wo)?;
        x = x.add(&attn)?;
        let h2 = layer_norm(&x, &block.ln2.gamma, &block.ln2.beta, eps)?;
        x = x.add(&ffn(&h2, &block.w1, &block.w2)?)?;
        maps.push(AttentionMatrix::mean(&head_maps)?);
    }
    EncoderTrace::new(maps, x)
}

/// Initialises weights from `config.seed` and runs one pass.
pub fn encode(image: &Image, config: &EncoderConfig) -> Result<EncoderTrace> {
    let weights = init_weights(config)?;
    forward(image, &weights, config)
}
