mod common;

use common::props;
use pmtk_core::matrix::ROW_SUM_TOLERANCE;
use pmtk_core::ops::{attention, matmul};
use pmtk_core::select::{select_tokens, top_k};
use pmtk_core::{AttentionMatrix, EncoderTrace, Matrix, SelectionConfig};
use proptest::prelude::*;

fn small_matrix(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f32..2.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
}

proptest! {
    #[test]
    fn gather_copies_rows_bit_for_bit(input in props::matrix_and_subset()) {
        props::gather_is_value_exact(input)?;
    }

    #[test]
    fn selection_commutes_with_relabelling(input in props::trace_and_perm(12, 5), k in 1usize..4) {
        props::permutation_equivariance(input, k)?;
    }

    #[test]
    fn top_k_ignores_positive_scale(
        r in prop::collection::vec(0.0f32..50.0, 1..40),
        alpha in 1e-3f32..1e3,
        k in 1usize..10,
    ) {
        props::scale_invariance(r, alpha, k)?;
    }

    #[test]
    fn larger_k_keeps_every_pivotal(t in props::trace(12, 5), k in 1usize..6) {
        props::k_monotonicity(t, k)?;
    }

    #[test]
    fn pivotal_and_complementary_partition_selection(
        t in props::trace(12, 5),
        k in 1usize..5,
        lambda in 0.1f64..3.0,
        cap in prop::option::of(1usize..10),
    ) {
        props::disjoint_and_union(t, k, lambda, cap)?;
    }

    #[test]
    fn contribution_degree_is_bounded(a in props::attention(24)) {
        props::contribution_bounds(a)?;
    }

    #[test]
    fn attention_rows_are_stochastic(
        (n, dk, q, k, v) in (1usize..10, 1usize..6).prop_flat_map(|(n, dk)| {
            (Just(n), Just(dk), small_matrix(n, dk), small_matrix(n, dk), small_matrix(n, dk))
        })
    ) {
        let (a, y) = attention(&q, &k, &v, dk).unwrap();
        prop_assert_eq!(y.shape(), (n, dk));
        for i in 0..n {
            let s: f32 = a.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() <= ROW_SUM_TOLERANCE);
        }
    }

    #[test]
    fn attention_output_is_convex_combination_of_values(
        (n, q, k, v) in (1usize..10).prop_flat_map(|n| {
            (Just(n), small_matrix(n, 3), small_matrix(n, 3), small_matrix(n, 4))
        })
    ) {
        let (_, y) = attention(&q, &k, &v, 3).unwrap();
        for c in 0..4 {
            let col: Vec<f32> = (0..n).map(|r| v.get(r, c)).collect();
            let lo = col.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = col.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            for r in 0..n {
                prop_assert!(y.get(r, c) >= lo - 1e-5 && y.get(r, c) <= hi + 1e-5);
            }
        }
    }

    #[test]
    fn attention_commutes_with_token_permutation(
        (q, k, v, perm) in (2usize..8).prop_flat_map(|n| {
            (small_matrix(n, 3), small_matrix(n, 3), small_matrix(n, 2),
             Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        })
    ) {
        let permute = |m: &Matrix| {
            let rows: Vec<Vec<f32>> = perm.iter().map(|&i| m.row(i).to_vec()).collect();
            Matrix::from_rows(&rows).unwrap()
        };
        let (a, y) = attention(&q, &k, &v, 3).unwrap();
        let (pa, py) = attention(&permute(&q), &permute(&k), &permute(&v), 3).unwrap();
        for (ni, &oi) in perm.iter().enumerate() {
            for (nj, &oj) in perm.iter().enumerate() {
                prop_assert!((pa.get(ni, nj) - a.get(oi, oj)).abs() < 1e-6);
            }
            for c in 0..2 {
                prop_assert!((py.get(ni, c) - y.get(oi, c)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(i, j, k, l)| {
            (small_matrix(i, j), small_matrix(j, k), small_matrix(k, l))
        })
    ) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-3);
    }

    #[test]
    fn saturated_k_keeps_everything(t in props::trace(10, 4)) {
        let n = t.tokens();
        let s = select_tokens(&t, &SelectionConfig { k: n, ..Default::default() }).unwrap();
        prop_assert_eq!(s.selected, (0..n).collect::<Vec<_>>());
        prop_assert!(s.complementary.is_empty());
    }

    #[test]
    fn selection_is_deterministic(t in props::trace(10, 4), k in 1usize..4) {
        let cfg = SelectionConfig { k, ..Default::default() };
        prop_assert_eq!(select_tokens(&t, &cfg).unwrap(), select_tokens(&t, &cfg).unwrap());
    }
}

fn constant_trace(a: AttentionMatrix, layers: usize) -> EncoderTrace {
    let n = a.n();
    EncoderTrace::new(vec![a; layers], Matrix::zeros(n, 1)).unwrap()
}

#[test]
fn uniform_attention_picks_lowest_indices() {
    for n in [1usize, 2, 5, 16, 64] {
        for layers in [2usize, 3, 12] {
            for k in [1usize, 3, 7] {
                let t = constant_trace(AttentionMatrix::uniform(n), layers);
                let s = select_tokens(
                    &t,
                    &SelectionConfig {
                        k,
                        ..Default::default()
                    },
                )
                .unwrap();
                let low: Vec<usize> = (0..k.min(n)).collect();
                assert!(s.complementary.is_empty());
                assert_eq!(s.pivotal, low);
                assert!(s.per_layer.iter().all(|p| p.indices == low));
            }
        }
    }
}

#[test]
fn identity_attention_has_zero_contribution() {
    for n in [1usize, 4, 33] {
        let t = constant_trace(AttentionMatrix::identity(n), 4);
        for p in pmtk_core::select::profile_layers(&t) {
            assert!(p.r.iter().all(|&v| v == 0.0));
            assert_eq!(p.gini, 0.0);
        }
        let s = select_tokens(
            &t,
            &SelectionConfig {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.pivotal, top_k(&vec![0.0; n], 2));
    }
}
