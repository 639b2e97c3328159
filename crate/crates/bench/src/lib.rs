//! Shared inputs for the criterion benchmarks.

use pmtk_core::encoder::encode;
use pmtk_core::{EncoderConfig, EncoderTrace, Matrix, SyntheticPattern};

/// Default encoder on a seeded noise image.
pub fn default_trace(seed: u64) -> EncoderTrace {
    let cfg = EncoderConfig {
        seed,
        ..EncoderConfig::default()
    };
    let image = SyntheticPattern::Noise.render(cfg.image_size, cfg.channels, seed);
    encode(&image, &cfg).expect("default encoder config is valid")
}

/// Deterministic `rows × cols` matrix with entries in `[-1, 1)`.
pub fn ramp_matrix(rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|i| ((i * 7919 % 2000) as f32) / 1000.0 - 1.0)
        .collect();
    Matrix::new(rows, cols, data).expect("finite entries")
}
