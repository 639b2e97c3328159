//! Straight-line reference implementations used as test oracles.
//!
//! Nothing here depends on `pmtk-core`; everything works on plain nested
//! vectors with naive loops.

#![allow(clippy::needless_range_loop)]

pub type Rows = Vec<Vec<f64>>;

pub fn to_f64(rows: &[Vec<f32>]) -> Rows {
    rows.iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

pub fn naive_matmul(a: &Rows, b: &Rows) -> Rows {
    let n = a.len();
    let inner = b.len();
    let m = if inner == 0 { 0 } else { b[0].len() };
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..inner {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// softmax(Q·Kᵀ/√d_k) and A·V, written out entry by entry.
pub fn naive_attention(q: &Rows, k: &Rows, v: &Rows, d_k: usize) -> (Rows, Rows) {
    let n = q.len();
    let m = k.len();
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut a = vec![vec![0.0; m]; n];
    for i in 0..n {
        let mut logits = vec![0.0; m];
        for j in 0..m {
            let mut dot = 0.0;
            for t in 0..d_k {
                dot += q[i][t] * k[j][t];
            }
            logits[j] = dot * scale;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..m {
            denom += (logits[j] - max).exp();
        }
        for j in 0..m {
            a[i][j] = (logits[j] - max).exp() / denom;
        }
    }
    let y = naive_matmul(&a, v);
    (a, y)
}

pub fn naive_layer_norm(x: &Rows, gamma: &[f64], beta: &[f64], eps: f64) -> Rows {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + eps).sqrt() * gamma[j] + beta[j])
                .collect()
        })
        .collect()
}

pub fn gelu_tanh(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

pub fn naive_ffn(x: &Rows, w1: &Rows, w2: &Rows) -> Rows {
    let h: Rows = naive_matmul(x, w1)
        .into_iter()
        .map(|r| r.into_iter().map(gelu_tanh).collect())
        .collect();
    naive_matmul(&h, w2)
}

/// Gini coefficient from the sorted-rank formula
/// `G = 2·Σ i·x_(i) / (n·Σ x) − (n + 1)/n` with 1-based ranks.
pub fn gini_sorted(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let total: f64 = v.iter().sum();
    if v.is_empty() || total == 0.0 {
        return 0.0;
    }
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| (i as f64 + 1.0) * x)
        .sum();
    2.0 * weighted / (n * total) - (n + 1.0) / n
}

/// Gini as mean absolute pairwise difference over twice the mean.
pub fn gini_pairwise(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.is_empty() || mean == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for a in values {
        for b in values {
            acc += (a - b).abs();
        }
    }
    acc / (2.0 * n * n * mean)
}

/// Type-7 quantile (linear interpolation between order statistics).
pub fn quantile_type7(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Patchify by explicit index arithmetic: token `t` covers grid cell
/// `(t / grid, t % grid)`; features run over (dy, dx, channel).
pub fn patchify_oracle(
    pixels: &[f32],
    size: usize,
    channels: usize,
    patch: usize,
) -> Vec<Vec<f32>> {
    let grid = size / patch;
    let mut out = Vec::new();
    for t in 0..grid * grid {
        let (gy, gx) = (t / grid, t % grid);
        let mut row = Vec::new();
        for dy in 0..patch {
            for dx in 0..patch {
                for ch in 0..channels {
                    let y = gy * patch + dy;
                    let x = gx * patch + dx;
                    row.push(pixels[(y * size + x) * channels + ch]);
                }
            }
        }
        out.push(row);
    }
    out
}

/// Plain weights for [`naive_encoder`].
pub struct PlainBlock {
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub wq: Rows,
    pub wk: Rows,
    pub wv: Rows,
    pub wo: Rows,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    pub w1: Rows,
    pub w2: Rows,
}

pub struct PlainEncoder {
    pub patch_embed: Rows,
    pub pos_embed: Option<Rows>,
    pub blocks: Vec<PlainBlock>,
    pub heads: usize,
    pub eps: f64,
    pub pixel_mean: f64,
    pub pixel_std: f64,
}

/// Pre-norm ViT forward pass in f64. Returns per-layer head-averaged
/// attention and the final token embeddings.
pub fn naive_encoder(enc: &PlainEncoder, patches: &Rows) -> (Vec<Rows>, Rows) {
    let normed: Rows = patches
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| (v - enc.pixel_mean) / enc.pixel_std)
                .collect()
        })
        .collect();
    let mut x = naive_matmul(&normed, &enc.patch_embed);
    if let Some(pos) = &enc.pos_embed {
        for i in 0..x.len() {
            for j in 0..x[i].len() {
                x[i][j] += pos[i][j];
            }
        }
    }
    let n = x.len();
    let d = x[0].len();
    let dk = d / enc.heads;
    let mut maps = Vec::new();
    for b in &enc.blocks {
        let h = naive_layer_norm(&x, &b.ln1_gamma, &b.ln1_beta, enc.eps);
        let q = naive_matmul(&h, &b.wq);
        let k = naive_matmul(&h, &b.wk);
        let v = naive_matmul(&h, &b.wv);
        let mut avg = vec![vec![0.0; n]; n];
        let mut concat = vec![vec![0.0; d]; n];
        for head in 0..enc.heads {
            let cols = |m: &Rows| -> Rows {
                m.iter()
                    .map(|r| r[head * dk..(head + 1) * dk].to_vec())
                    .collect()
            };
            let (a, y) = naive_attention(&cols(&q), &cols(&k), &cols(&v), dk);
            for i in 0..n {
                for j in 0..n {
                    avg[i][j] += a[i][j] / enc.heads as f64;
                }
                for t in 0..dk {
                    concat[i][head * dk + t] = y[i][t];
                }
            }
        }
        let o = naive_matmul(&concat, &b.wo);
        for i in 0..n {
            for j in 0..d {
                x[i][j] += o[i][j];
            }
        }
        let h2 = naive_layer_norm(&x, &b.ln2_gamma, &b.ln2_beta, enc.eps);
        let f = naive_ffn(&h2, &b.w1, &b.w2);
        for i in 0..n {
            for j in 0..d {
                x[i][j] += f[i][j];
            }
        }
        maps.push(avg);
    }
    (maps, x)
}

/// Parameters for [`alg1_oracle`]; layer bounds are inclusive and zero-based.
pub struct Alg1Params {
    pub start_layer: usize,
    pub end_layer: usize,
    pub complement_layer: usize,
    pub k: usize,
    pub lambda: f64,
    pub max_tokens: Option<usize>,
}

#[derive(Debug, PartialEq)]
pub struct Alg1Output {
    pub per_layer: Vec<(usize, Vec<usize>)>,
    pub pivotal: Vec<usize>,
    pub complementary: Vec<usize>,
    pub selected: Vec<usize>,
}

/// Two-stage selection written as one straight-line function.
///
/// `maps[l][i][j]` is layer `l` attention from token `i` to token `j`.
/// Contribution sums run over rows in ascending order in `f32`, then the
/// diagonal is subtracted.
pub fn alg1_oracle(maps: &[Vec<Vec<f32>>], p: &Alg1Params) -> Alg1Output {
    let n = maps[0].len();
    let mut is_pivotal = vec![false; n];
    let mut aggregate = vec![0.0f64; n];
    let mut per_layer = Vec::new();

    for l in p.start_layer..=p.end_layer {
        let a = &maps[l];
        let mut r = vec![0.0f32; n];
        for i in 0..n {
            let mut col = 0.0f32;
            for row in a.iter() {
                col += row[i];
            }
            r[i] = col - a[i][i];
        }
        // repeated argmax; strict > keeps the lowest index on ties
        let mut taken = vec![false; n];
        let mut chosen = Vec::new();
        for _ in 0..p.k.min(n) {
            let mut best: Option<usize> = None;
            for i in 0..n {
                if taken[i] {
                    continue;
                }
                match best {
                    None => best = Some(i),
                    Some(b) if r[i] > r[b] => best = Some(i),
                    _ => {}
                }
            }
            let b = best.unwrap();
            taken[b] = true;
            chosen.push(b);
        }
        chosen.sort();
        for &i in &chosen {
            is_pivotal[i] = true;
        }
        for i in 0..n {
            aggregate[i] += r[i] as f64;
        }
        per_layer.push((l, chosen));
    }

    let pen = &maps[p.complement_layer];
    let mut is_comp = vec![false; n];
    let mut support = vec![f64::NEG_INFINITY; n];
    for ip in 0..n {
        if !is_pivotal[ip] {
            continue;
        }
        let row: Vec<f64> = pen[ip].iter().map(|&v| v as f64).collect();
        let q1 = quantile_type7(&row, 0.25);
        let q3 = quantile_type7(&row, 0.75);
        let fence = q3 + p.lambda * (q3 - q1);
        for j in 0..n {
            if row[j] > fence && !is_pivotal[j] {
                is_comp[j] = true;
                if row[j] > support[j] {
                    support[j] = row[j];
                }
            }
        }
    }

    if let Some(cap) = p.max_tokens {
        let mut count = (0..n).filter(|&i| is_pivotal[i] || is_comp[i]).count();
        while count > cap {
            // weakest complement first; among equals the higher index goes
            let mut victim: Option<usize> = None;
            for j in 0..n {
                if is_comp[j] {
                    match victim {
                        Some(v) if support[j] > support[v] => {}
                        _ => victim = Some(j),
                    }
                }
            }
            if let Some(v) = victim {
                is_comp[v] = false;
            } else {
                let mut pv: Option<usize> = None;
                for i in 0..n {
                    if is_pivotal[i] {
                        match pv {
                            Some(v) if aggregate[i] > aggregate[v] => {}
                            _ => pv = Some(i),
                        }
                    }
                }
                is_pivotal[pv.unwrap()] = false;
            }
            count -= 1;
        }
    }

    let pivotal: Vec<usize> = (0..n).filter(|&i| is_pivotal[i]).collect();
    let complementary: Vec<usize> = (0..n).filter(|&i| is_comp[i]).collect();
    let selected: Vec<usize> = (0..n).filter(|&i| is_pivotal[i] || is_comp[i]).collect();
    Alg1Output {
        per_layer,
        pivotal,
        complementary,
        selected,
    }
}
