//! Property bodies shared by the proptest suite and the acceptance runner.
#![allow(dead_code)]

use pmtk_core::ops::softmax_rows;
use pmtk_core::select::{contribution_degree, gather, select_pivotal, select_tokens, top_k};
use pmtk_core::{AttentionMatrix, EncoderTrace, Matrix, SelectionConfig};
use proptest::prelude::*;
use proptest::sample::subsequence;
use proptest::test_runner::TestCaseError;

type Check = Result<(), TestCaseError>;

fn attention_from_logits(n: usize, logits: Vec<f32>) -> AttentionMatrix {
    let soft = softmax_rows(&Matrix::new(n, n, logits).unwrap()).unwrap();
    AttentionMatrix::new(soft).unwrap()
}

pub fn attention(max_n: usize) -> impl Strategy<Value = AttentionMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        (prop::collection::vec(-6.0f32..6.0, n * n), Just(n))
            .prop_map(|(logits, n)| attention_from_logits(n, logits))
    })
}

/// Traces with `n` in `2..=max_n` and `L` in `2..=max_layers`.
pub fn trace(max_n: usize, max_layers: usize) -> impl Strategy<Value = EncoderTrace> {
    (2..=max_n, 2..=max_layers).prop_flat_map(|(n, layers)| {
        (
            prop::collection::vec(prop::collection::vec(-6.0f32..6.0, n * n), layers),
            prop::collection::vec(-1.0f32..1.0, n * 2),
            Just(n),
        )
            .prop_map(|(maps, emb, n)| {
                let attn = maps
                    .into_iter()
                    .map(|l| attention_from_logits(n, l))
                    .collect();
                EncoderTrace::new(attn, Matrix::new(n, 2, emb).unwrap()).unwrap()
            })
    })
}

pub fn trace_and_perm(
    max_n: usize,
    max_layers: usize,
) -> impl Strategy<Value = (EncoderTrace, Vec<usize>)> {
    trace(max_n, max_layers).prop_flat_map(|t| {
        let perm = Just((0..t.tokens()).collect::<Vec<_>>()).prop_shuffle();
        (Just(t), perm)
    })
}

pub fn matrix_and_subset() -> impl Strategy<Value = (Matrix, Vec<usize>)> {
    (1usize..12, 1usize..8).prop_flat_map(|(r, c)| {
        (
            prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), r * c),
            subsequence((0..r).collect::<Vec<_>>(), 0..=r),
        )
            .prop_map(move |(data, idx)| (Matrix::new(r, c, data).unwrap(), idx))
    })
}

pub fn gather_is_value_exact((m, idx): (Matrix, Vec<usize>)) -> Check {
    let out = gather(&m, &idx)?;
    prop_assert_eq!(out.rows(), idx.len());
    for (k, &i) in idx.iter().enumerate() {
        let got: Vec<u32> = out.row(k).iter().map(|v| v.to_bits()).collect();
        let want: Vec<u32> = m.row(i).iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(got, want);
    }
    Ok(())
}

fn boundary_gap(r: &[f32], k: usize) -> f32 {
    let mut s = r.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if k >= s.len() {
        f32::INFINITY
    } else {
        s[k - 1] - s[k]
    }
}

/// Relabelling tokens relabels every index set. Only checked where the
/// top-k boundary has a clear gap, since ties resolve by index.
pub fn permutation_equivariance((t, perm): (EncoderTrace, Vec<usize>), k: usize) -> Check {
    let cfg = SelectionConfig {
        k,
        ..SelectionConfig::default()
    };
    let res = cfg.resolve(t.num_layers())?;
    for l in res.start_layer..=res.end_layer {
        prop_assume!(boundary_gap(&contribution_degree(t.layer(l)), k) > 1e-4);
    }
    let base = select_tokens(&t, &cfg)?;
    let moved = select_tokens(&t.permuted(&perm)?, &cfg)?;
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let map = |set: &[usize]| {
        let mut v: Vec<usize> = set.iter().map(|&i| inv[i]).collect();
        v.sort_unstable();
        v
    };
    prop_assert_eq!(map(&base.pivotal), moved.pivotal);
    prop_assert_eq!(map(&base.complementary), moved.complementary);
    prop_assert_eq!(map(&base.selected), moved.selected);
    for (a, b) in base.per_layer.iter().zip(&moved.per_layer) {
        prop_assert_eq!(map(&a.indices), b.indices.clone());
    }
    Ok(())
}

pub fn scale_invariance(r: Vec<f32>, alpha: f32, k: usize) -> Check {
    let scaled: Vec<f32> = r.iter().map(|v| v * alpha).collect();
    // scaling may merge two neighbouring floats; then tie-breaking applies
    let mut a = r.clone();
    let mut b = scaled.clone();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    a.dedup();
    b.dedup();
    prop_assume!(a.len() == b.len());
    prop_assert_eq!(top_k(&r, k), top_k(&scaled, k));
    Ok(())
}

pub fn k_monotonicity(t: EncoderTrace, k: usize) -> Check {
    let small = select_pivotal(
        &t,
        &SelectionConfig {
            k,
            ..Default::default()
        },
    )?;
    let big = select_pivotal(
        &t,
        &SelectionConfig {
            k: k + 1,
            ..Default::default()
        },
    )?;
    for i in &small.indices {
        prop_assert!(
            big.indices.contains(i),
            "{} lost going from k={} to k={}",
            i,
            k,
            k + 1
        );
    }
    for (a, b) in small.per_layer.iter().zip(&big.per_layer) {
        prop_assert!(a.indices.iter().all(|i| b.indices.contains(i)));
    }
    Ok(())
}

pub fn disjoint_and_union(t: EncoderTrace, k: usize, lambda: f64, cap: Option<usize>) -> Check {
    let cfg = SelectionConfig {
        k,
        outlier_lambda: lambda,
        max_tokens: cap,
        ..Default::default()
    };
    let s = select_tokens(&t, &cfg)?;
    prop_assert!(s.pivotal.iter().all(|i| !s.complementary.contains(i)));
    let mut union: Vec<usize> = s.pivotal.iter().chain(&s.complementary).copied().collect();
    union.sort_unstable();
    prop_assert_eq!(&union, &s.selected);
    prop_assert!(s.selected.windows(2).all(|w| w[0] < w[1]));
    prop_assert!(s.selected.iter().all(|&i| i < t.tokens()));
    prop_assert!(s.m() <= t.tokens());
    if let Some(cap) = cap {
        prop_assert!(s.m() <= cap);
    }
    Ok(())
}

pub fn contribution_bounds(a: AttentionMatrix) -> Check {
    let n = a.n();
    for v in contribution_degree(&a) {
        prop_assert!(v >= 0.0, "r = {}", v);
        prop_assert!(
            v <= (n - 1) as f32 + 1e-4 * n as f32,
            "r = {} for n = {}",
            v,
            n
        );
    }
    Ok(())
}
