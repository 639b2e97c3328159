mod common;

use common::{maps, plain, random_trace, rows, same_as_oracle};
use pmtk_core::encoder::{encode, forward, init_weights, patchify};
use pmtk_core::select::{profile_layers, select_complementary, select_tokens, top_k};
use pmtk_core::stats::gini;
use pmtk_core::{AttentionMatrix, EncoderConfig, Matrix, SelectionConfig, SyntheticPattern};
use pmtk_testkit::{
    alg1_oracle, gini_pairwise, gini_sorted, naive_encoder, patchify_oracle, quantile_type7,
    Alg1Params,
};

fn fixture_config() -> EncoderConfig {
    EncoderConfig {
        image_size: 16,
        patch_size: 4,
        channels: 3,
        dim: 16,
        heads: 2,
        layers: 4,
        ffn_dim: 32,
        seed: 0,
        ..EncoderConfig::default()
    }
}

#[test]
fn patchify_matches_index_arithmetic() {
    let cfg = EncoderConfig {
        image_size: 8,
        ..fixture_config()
    };
    let img = SyntheticPattern::Noise.render(8, 3, 11);
    let got = patchify(&img, &cfg).unwrap();
    let want = patchify_oracle(img.as_slice(), 8, 3, 4);
    assert_eq!(got.rows(), 4);
    for (g, w) in got.iter_rows().zip(&want) {
        assert_eq!(g, w.as_slice());
    }
}

#[test]
fn encoder_matches_naive_forward() {
    for (size, layers) in [(8, 2), (16, 4)] {
        let cfg = EncoderConfig {
            image_size: size,
            layers,
            ..fixture_config()
        };
        let img = SyntheticPattern::Noise.render(size, 3, 0);
        let w = init_weights(&cfg).unwrap();
        let trace = forward(&img, &w, &cfg).unwrap();
        let patches = rows(&patchify(&img, &cfg).unwrap());
        let (want_maps, want_x) = naive_encoder(&plain(&w, &cfg), &patches);
        for (a, want) in trace.attention().iter().zip(&want_maps) {
            for (i, wr) in want.iter().enumerate() {
                for (j, &wv) in wr.iter().enumerate() {
                    assert!((a.get(i, j) as f64 - wv).abs() < 1e-5);
                }
            }
        }
        let got_x = rows(trace.embeddings());
        for (g, w) in got_x.iter().flatten().zip(want_x.iter().flatten()) {
            assert!((g - w).abs() < 1e-4, "{g} vs {w}");
        }
    }
}

#[test]
fn fixture_selection_matches_straight_line_oracle() {
    let cfg = fixture_config();
    let trace = encode(&SyntheticPattern::Noise.render(16, 3, 0), &cfg).unwrap();
    let sel = SelectionConfig {
        start_layer: Some(0),
        k: 2,
        outlier_lambda: 1.5,
        ..SelectionConfig::default()
    };
    let got = select_tokens(&trace, &sel).unwrap();
    let want = alg1_oracle(
        &maps(&trace),
        &Alg1Params {
            start_layer: 0,
            end_layer: 2,
            complement_layer: 2,
            k: 2,
            lambda: 1.5,
            max_tokens: None,
        },
    );
    assert!(same_as_oracle(&got, &want), "{got:?}\n{want:?}");
}

#[test]
fn pivotal_sets_match_brute_force_rescan() {
    let cfg = fixture_config();
    let trace = encode(&SyntheticPattern::Checkerboard.render(16, 3, 0), &cfg).unwrap();
    let got = select_tokens(&trace, &SelectionConfig::default()).unwrap();
    for pick in &got.per_layer {
        let a = trace.layer(pick.layer);
        let n = a.n();
        let r: Vec<f32> = (0..n)
            .map(|i| (0..n).map(|j| a.get(j, i)).sum::<f32>() - a.get(i, i))
            .collect();
        // i is in the top k iff fewer than k tokens beat it under (value desc, index asc)
        let want: Vec<usize> = (0..n)
            .filter(|&i| {
                (0..n)
                    .filter(|&j| r[j] > r[i] || (r[j] == r[i] && j < i))
                    .count()
                    < pmtk_core::select::DEFAULT_K
            })
            .collect();
        assert_eq!(pick.indices, want);
    }
}

#[test]
fn budgeted_selection_matches_oracle() {
    let mut checked = 0;
    for seed in 0..40 {
        let trace = random_trace(seed, 12, 5);
        for cap in [1, 3, 5, 8] {
            let sel = SelectionConfig {
                start_layer: Some(1),
                k: 3,
                max_tokens: Some(cap),
                ..SelectionConfig::default()
            };
            let got = select_tokens(&trace, &sel).unwrap();
            let want = alg1_oracle(
                &maps(&trace),
                &Alg1Params {
                    start_layer: 1,
                    end_layer: 3,
                    complement_layer: 3,
                    k: 3,
                    lambda: 1.5,
                    max_tokens: Some(cap),
                },
            );
            assert!(same_as_oracle(&got, &want), "seed {seed} cap {cap}");
            assert!(got.m() <= cap);
            checked += 1;
        }
    }
    assert_eq!(checked, 160);
}

#[test]
fn budget_drops_all_complements_before_any_pivotal() {
    for seed in 0..60 {
        let trace = random_trace(seed, 16, 4);
        let free = select_tokens(
            &trace,
            &SelectionConfig {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        if free.complementary.is_empty() {
            continue;
        }
        let cap = free.pivotal.len();
        let capped = select_tokens(
            &trace,
            &SelectionConfig {
                k: 2,
                max_tokens: Some(cap),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(capped.pivotal, free.pivotal);
        assert!(capped.complementary.is_empty());
        return;
    }
    panic!("no trace produced complements");
}

#[test]
fn spike_row_flags_single_outlier() {
    let mut row = vec![0.05f32; 8];
    row[5] = 0.65;
    let wide: Vec<f64> = row.iter().map(|&v| v as f64).collect();
    let fence = quantile_type7(&wide, 0.75)
        + 1.5 * (quantile_type7(&wide, 0.75) - quantile_type7(&wide, 0.25));
    let flagged: Vec<usize> = (0..8).filter(|&j| wide[j] > fence).collect();
    assert_eq!(flagged, vec![5]);

    let rows: Vec<Vec<f32>> = (0..8).map(|_| row.clone()).collect();
    let a = AttentionMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap();
    let c = select_complementary(&a, &[0], 1.5).unwrap();
    assert_eq!(c.iter().map(|c| c.index).collect::<Vec<_>>(), vec![5]);
    assert!(select_complementary(&a, &[5], 1.5).unwrap().is_empty());
    assert!(select_complementary(&a, &[], 1.5).unwrap().is_empty());
}

#[test]
fn layer_gini_matches_sorting_oracle() {
    let cfg = fixture_config();
    let trace = encode(&SyntheticPattern::Gradient.render(16, 3, 0), &cfg).unwrap();
    for p in profile_layers(&trace) {
        let r: Vec<f64> = p.r.iter().map(|&v| v as f64).collect();
        assert!((p.gini - gini_sorted(&r)).abs() < 1e-9);
        assert!((gini(&r) - gini_pairwise(&r)).abs() < 1e-9);
    }
}

#[test]
fn top_k_examples() {
    assert_eq!(top_k(&[0.0, 5.0, 3.0, 5.0], 2), vec![1, 3]);
    assert_eq!(top_k(&[4.0, 3.0, 2.0, 1.0], 2), vec![0, 1]);
    assert_eq!(top_k(&[1.0; 4], 9), vec![0, 1, 2, 3]);
}
