use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and initialisation of the built-in encoder.
///
/// The defaults match ViT-Tiny widths (192-d, 3 heads, 768-wide MLP, 12
/// layers) on a 32×32 RGB input cut into 4×4 patches, giving 64 tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    pub seed: u64,
    /// Learnable (seeded) positional embeddings; off for symmetry tests.
    pub positional_embeddings: bool,
    /// Pixels are mapped to `(x − mean) / std` before the patch projection.
    pub pixel_mean: f32,
    pub pixel_std: f32,
    pub init_std: f32,
    pub layer_norm_eps: f32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 4,
            channels: 3,
            dim: 192,
            heads: 3,
            layers: 12,
            ffn_dim: 768,
            seed: 0,
            positional_embeddings: true,
            pixel_mean: 0.5,
            pixel_std: 0.5,
            init_std: 0.02,
            layer_norm_eps: crate::ops::LAYER_NORM_EPS,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let nonzero = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("channels", self.channels),
            ("dim", self.dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
        ];
        if let Some((name, _)) = nonzero.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("encoder.{name} must be positive")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::config(format!(
                "encoder.image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "encoder.dim {} is not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.layers < 2 {
            return Err(Error::config(format!(
                "encoder.layers must be at least 2, got {}",
                self.layers
            )));
        }
        if !(self.pixel_std > 0.0 && self.init_std > 0.0 && self.layer_norm_eps >= 0.0) {
            return Err(Error::config(
                "encoder.pixel_std and init_std must be positive, layer_norm_eps nonnegative",
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}
