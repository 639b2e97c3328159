//! Transformer primitives: matmul, row softmax, scaled dot-product attention,
//! layer normalization and the two-layer feed-forward network.
//!
//! Token matrices are row-major with one token per row, so the column-vector
//! form `W₂·σ(W₁·X)` is evaluated here as `σ(X·W₁)·W₂` with `W₁: d×f`.

use crate::error::{Error, Result};
use crate::matrix::{AttentionMatrix, Matrix};

pub const LAYER_NORM_EPS: f32 = 1e-5;

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!(
                "lhs is {}x{}, rhs is {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ),
        ));
    }
    let (n, m) = (a.rows(), b.cols());
    let mut out = vec![0.0f32; n * m];
    let bs = b.as_slice();
    for i in 0..n {
        let acc = &mut out[i * m..(i + 1) * m];
        for (t, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &bs[t * m..(t + 1) * m];
            for (o, &bv) in acc.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Matrix::from_parts(n, m, out).checked("matmul")
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if m.is_empty() {
        return Err(Error::Empty("softmax_rows"));
    }
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for row in m.iter_rows() {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let start = out.len();
        let mut sum = 0.0f32;
        for &v in row {
            let e = (v - max).exp();
            sum += e;
            out.push(e);
        }
        for e in &mut out[start..] {
            *e /= sum;
        }
    }
    Ok(Matrix::from_parts(m.rows(), m.cols(), out))
}

/// Scaled dot-product attention. Returns `A = softmax(Q·Kᵀ/√d_k)` and `Y = A·V`.
pub fn attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    d_k: usize,
) -> Result<(AttentionMatrix, Matrix)> {
    if d_k == 0 {
        return Err(Error::shape("attention", "d_k must be positive"));
    }
    if q.cols() != d_k || k.cols() != d_k {
        return Err(Error::shape(
            "attention",
            format!(
                "q has {} columns, k has {}, d_k is {d_k}",
                q.cols(),
                k.cols()
            ),
        ));
    }
    if k.rows() != v.rows() {
        return Err(Error::shape(
            "attention",
            format!("k has {} rows, v has {}", k.rows(), v.rows()),
        ));
    }
    if q.rows() != k.rows() {
        return Err(Error::shape(
            "attention",
            format!(
                "self-attention needs as many queries as keys: {} vs {}",
                q.rows(),
                k.rows()
            ),
        ));
    }
    let logits = matmul(q, &k.transpose())?.scale(1.0 / (d_k as f32).sqrt())?;
    let a = softmax_rows(&logits)?;
    let y = matmul(&a, v)?;
    Ok((AttentionMatrix::from_softmax(a), y))
}

pub fn layer_norm(m: &Matrix, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Matrix> {
    if gamma.len() != m.cols() || beta.len() != m.cols() {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "{} columns but gamma has {} and beta has {}",
                m.cols(),
                gamma.len(),
                beta.len()
            ),
        ));
    }
    if m.cols() == 0 {
        return Err(Error::Empty("layer_norm"));
    }
    let width = m.cols() as f32;
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for row in m.iter_rows() {
        let mean = row.iter().sum::<f32>() / width;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / width;
        let inv = 1.0 / (var + eps).sqrt();
        out.extend(
            row.iter()
                .zip(gamma.iter().zip(beta))
                .map(|(v, (g, b))| (v - mean) * inv * g + b),
        );
    }
    Matrix::from_parts(m.rows(), m.cols(), out).checked("layer_norm")
}

/// GELU, tanh approximation.
#[inline]
pub fn gelu(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

/// `gelu(x·w1)·w2`, no biases.
pub fn ffn(x: &Matrix, w1: &Matrix, w2: &Matrix) -> Result<Matrix> {
    if x.cols() != w1.rows() || w1.cols() != w2.rows() {
        return Err(Error::shape(
            "ffn",
            format!(
                "x is {}x{}, w1 is {}x{}, w2 is {}x{}",
                x.rows(),
                x.cols(),
                w1.rows(),
                w1.cols(),
                w2.rows(),
                w2.cols()
            ),
        ));
    }
    let hidden = matmul(x, w1)?;
    let activated = Matrix::from_parts(
        hidden.rows(),
        hidden.cols(),
        hidden.as_slice().iter().map(|&v| gelu(v)).collect(),
    );
    matmul(&activated, w2)
}
