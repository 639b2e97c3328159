use serde::Serialize;

use crate::encoder::EncoderTrace;
use crate::matrix::AttentionMatrix;
use crate::stats;

/// Per-layer contribution degree and its distribution summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionProfile {
    pub layer: usize,
    /// `r[i]`: attention token `i` receives from every other token.
    pub r: Vec<f32>,
    pub mean: f64,
    pub max: f64,
    pub gini: f64,
}

/// Column sum of `a` minus the diagonal: `r[i] = Σ_j a[j][i] − a[i][i]`.
///
/// Columns are accumulated in ascending row order in `f32`. Each value lies
/// in `[0, n − 1]`.
pub fn contribution_degree(a: &AttentionMatrix) -> Vec<f32> {
    let n = a.n();
    let mut col = vec![0.0f32; n];
    for j in 0..n {
        for (acc, v) in col.iter_mut().zip(a.row(j)) {
            *acc += v;
        }
    }
    col.iter()
        .enumerate()
        .map(|(i, c)| c - a.get(i, i))
        .collect()
}

impl ContributionProfile {
    pub fn from_attention(layer: usize, a: &AttentionMatrix) -> Self {
        let r = contribution_degree(a);
        let wide: Vec<f64> = r.iter().map(|&v| v as f64).collect();
        let mean = wide.iter().sum::<f64>() / wide.len() as f64;
        let max = wide.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gini = stats::gini(&wide);
        Self {
            layer,
            r,
            mean,
            max,
            gini,
        }
    }
}

/// One profile per layer of `trace`.
pub fn profile_layers(trace: &EncoderTrace) -> Vec<ContributionProfile> {
    trace
        .attention()
        .iter()
        .enumerate()
        .map(|(l, a)| ContributionProfile::from_attention(l, a))
        .collect()
}

/// `r` of one token across all layers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub index: usize,
    pub r: Vec<f32>,
}

/// Per-token trajectories for `indices` (out-of-range indices are skipped).
pub fn trajectories(profiles: &[ContributionProfile], indices: &[usize]) -> Vec<Trajectory> {
    let n = profiles.first().map_or(0, |p| p.r.len());
    indices
        .iter()
        .filter(|&&i| i < n)
        .map(|&i| Trajectory {
            index: i,
            r: profiles.iter().map(|p| p.r[i]).collect(),
        })
        .collect()
}
