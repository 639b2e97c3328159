#![allow(dead_code)]

pub mod props;

use pmtk_core::encoder::EncoderWeights;
use pmtk_core::ops::softmax_rows;
use pmtk_core::select::SelectionResult;
use pmtk_core::{AttentionMatrix, EncoderConfig, EncoderTrace, Matrix};
use pmtk_testkit::{Alg1Output, PlainBlock, PlainEncoder, Rows};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rows(m: &Matrix) -> Rows {
    m.iter_rows()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

pub fn plain(weights: &EncoderWeights, config: &EncoderConfig) -> PlainEncoder {
    let v = |s: &[f32]| s.iter().map(|&x| x as f64).collect::<Vec<_>>();
    PlainEncoder {
        patch_embed: rows(&weights.patch_embed),
        pos_embed: weights.pos_embed.as_ref().map(rows),
        blocks: weights
            .blocks
            .iter()
            .map(|b| PlainBlock {
                ln1_gamma: v(&b.ln1.gamma),
                ln1_beta: v(&b.ln1.beta),
                wq: rows(&b.wq),
                wk: rows(&b.wk),
                wv: rows(&b.wv),
                wo: rows(&b.wo),
                ln2_gamma: v(&b.ln2.gamma),
                ln2_beta: v(&b.ln2.beta),
                w1: rows(&b.w1),
                w2: rows(&b.w2),
            })
            .collect(),
        heads: config.heads,
        eps: config.layer_norm_eps as f64,
        pixel_mean: config.pixel_mean as f64,
        pixel_std: config.pixel_std as f64,
    }
}

pub fn maps(trace: &EncoderTrace) -> Vec<Vec<Vec<f32>>> {
    trace
        .attention()
        .iter()
        .map(|a| (0..a.n()).map(|i| a.row(i).to_vec()).collect())
        .collect()
}

pub fn same_as_oracle(got: &SelectionResult, want: &Alg1Output) -> bool {
    let per_layer: Vec<(usize, Vec<usize>)> = got
        .per_layer
        .iter()
        .map(|p| (p.layer, p.indices.clone()))
        .collect();
    per_layer == want.per_layer
        && got.pivotal == want.pivotal
        && got.complementary == want.complementary
        && got.selected == want.selected
}

/// Softmax of Gaussian logits scaled by `temp`; larger `temp` gives peakier rows.
pub fn random_attention(rng: &mut ChaCha8Rng, n: usize, temp: f32) -> AttentionMatrix {
    let logits: Vec<f32> = (0..n * n)
        .map(|_| temp * (rng.random::<f32>() - 0.5))
        .collect();
    let soft = softmax_rows(&Matrix::new(n, n, logits).unwrap()).unwrap();
    AttentionMatrix::new(soft).unwrap()
}

pub fn random_trace(seed: u64, n: usize, layers: usize) -> EncoderTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attn = (0..layers)
        .map(|_| random_attention(&mut rng, n, 8.0))
        .collect();
    let emb: Vec<f32> = (0..n * 3).map(|_| rng.random::<f32>()).collect();
    EncoderTrace::new(attn, Matrix::new(n, 3, emb).unwrap()).unwrap()
}
