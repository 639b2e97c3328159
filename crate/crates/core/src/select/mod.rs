//! Two-stage visual token selection.
//!
//! Stage one keeps, for every scanned layer, the `k` tokens with the largest
//! contribution degree (attention received from the other tokens). Stage two
//! looks at each of those pivotal tokens' attention rows in the penultimate
//! layer and keeps the tokens they attend to unusually strongly, using the
//! Tukey fence `Q3 + λ·IQR` with type-7 quartiles. Selection never touches
//! embedding values; [`gather`] only copies rows.
//!
//! Ties are always broken toward the lower token index.

mod contribution;

pub use contribution::{
    contribution_degree, profile_layers, trajectories, ContributionProfile, Trajectory,
};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderTrace;
use crate::error::{Error, Result};
use crate::matrix::{AttentionMatrix, Matrix};
use crate::stats;

/// Default pivotal tokens per scanned layer. With the default encoder and
/// layer range this keeps roughly half of the 64 tokens.
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_OUTLIER_LAMBDA: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// First scanned layer; defaults to `⌈L/4⌉`.
    pub start_layer: Option<usize>,
    /// Last scanned layer, inclusive; defaults to `L − 2`.
    pub end_layer: Option<usize>,
    /// Layer whose rows are searched for outliers; defaults to `L − 2`.
    pub complement_layer: Option<usize>,
    pub k: usize,
    pub outlier_lambda: f64,
    pub max_tokens: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            start_layer: None,
            end_layer: None,
            complement_layer: None,
            k: DEFAULT_K,
            outlier_lambda: DEFAULT_OUTLIER_LAMBDA,
            max_tokens: None,
        }
    }
}

/// A [`SelectionConfig`] with every layer bound fixed against a layer count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedSelection {
    pub start_layer: usize,
    pub end_layer: usize,
    pub complement_layer: usize,
    pub k: usize,
    pub outlier_lambda: f64,
    pub max_tokens: Option<usize>,
}

impl SelectionConfig {
    pub fn resolve(&self, num_layers: usize) -> Result<ResolvedSelection> {
        if num_layers < 2 {
            return Err(Error::config(format!(
                "selection needs at least 2 layers, trace has {num_layers}"
            )));
        }
        let penultimate = num_layers - 2;
        let start = self
            .start_layer
            .unwrap_or_else(|| num_layers.div_ceil(4).min(penultimate));
        let end = self.end_layer.unwrap_or(penultimate);
        let complement = self.complement_layer.unwrap_or(penultimate);
        if start >= num_layers - 1 {
            return Err(Error::config(format!(
                "selection.start_layer {start} must be below {}",
                num_layers - 1
            )));
        }
        if end < start || end >= num_layers {
            return Err(Error::config(format!(
                "selection.end_layer {end} must lie in {start}..{num_layers}"
            )));
        }
        if complement >= num_layers {
            return Err(Error::config(format!(
                "selection.complement_layer {complement} must be below {num_layers}"
            )));
        }
        if self.k == 0 {
            return Err(Error::config("selection.k must be at least 1"));
        }
        if !(self.outlier_lambda > 0.0 && self.outlier_lambda.is_finite()) {
            return Err(Error::config(format!(
                "selection.outlier_lambda must be positive, got {}",
                self.outlier_lambda
            )));
        }
        if self.max_tokens == Some(0) {
            return Err(Error::config("selection.max_tokens must be at least 1"));
        }
        Ok(ResolvedSelection {
            start_layer: start,
            end_layer: end,
            complement_layer: complement,
            k: self.k,
            outlier_lambda: self.outlier_lambda,
            max_tokens: self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Pivotal,
    Complementary,
}

/// Why a token was kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub index: usize,
    pub kind: TokenKind,
    /// Scanned layers where the token was in the top `k` (pivotal only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<usize>,
    /// Pivotal tokens whose rows flagged it (complementary only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<usize>,
    /// Largest flagging attention score (complementary only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPick {
    pub layer: usize,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotalSelection {
    pub per_layer: Vec<LayerPick>,
    /// Sorted union of `per_layer`.
    pub indices: Vec<usize>,
    /// Per token, `r` summed over scanned layers; ranks pivotal tokens under a budget.
    pub aggregate_r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Complement {
    pub index: usize,
    pub support: f32,
    pub sources: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub n: usize,
    pub per_layer: Vec<LayerPick>,
    pub pivotal: Vec<usize>,
    pub complementary: Vec<usize>,
    /// `pivotal ∪ complementary`, strictly increasing.
    pub selected: Vec<usize>,
    /// Tokens removed to honour `max_tokens`, in drop order.
    pub dropped: Vec<usize>,
    /// One entry per selected token, ascending by index.
    pub provenance: Vec<Provenance>,
}

impl SelectionResult {
    pub fn m(&self) -> usize {
        self.selected.len()
    }

    pub fn kind_of(&self, index: usize) -> Option<TokenKind> {
        self.provenance
            .binary_search_by_key(&index, |p| p.index)
            .ok()
            .map(|i| self.provenance[i].kind)
    }
}

/// Indices of the `k` largest values, ties to the lower index, returned ascending.
pub fn top_k(values: &[f32], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Top-`k` contribution degree per layer over the resolved scan range.
pub fn select_pivotal(trace: &EncoderTrace, config: &SelectionConfig) -> Result<PivotalSelection> {
    let cfg = config.resolve(trace.num_layers())?;
    Ok(pivotal_from(trace, &cfg))
}

fn pivotal_from(trace: &EncoderTrace, cfg: &ResolvedSelection) -> PivotalSelection {
    let n = trace.tokens();
    if cfg.k > n {
        log::warn!(
            "k = {} exceeds the {n} available tokens; keeping all of them",
            cfg.k
        );
    }
    let mut is_pivotal = vec![false; n];
    let mut aggregate_r = vec![0.0f64; n];
    let per_layer = (cfg.start_layer..=cfg.end_layer)
        .map(|layer| {
            let r = contribution_degree(trace.layer(layer));
            for (agg, v) in aggregate_r.iter_mut().zip(&r) {
                *agg += *v as f64;
            }
            let indices = top_k(&r, cfg.k);
            for &i in &indices {
                is_pivotal[i] = true;
            }
            LayerPick { layer, indices }
        })
        .collect();
    PivotalSelection {
        per_layer,
        indices: flags_to_indices(&is_pivotal),
        aggregate_r,
    }
}

/// Tokens flagged as upper outliers in the rows of `pivotal`, minus `pivotal` itself.
///
/// A token `j` is flagged by row `i` when `a[i][j] > Q3 + λ·(Q3 − Q1)`, with
/// quartiles taken over the whole row.
pub fn select_complementary(
    a: &AttentionMatrix,
    pivotal: &[usize],
    outlier_lambda: f64,
) -> Result<Vec<Complement>> {
    let n = a.n();
    if let Some(&bad) = pivotal.iter().find(|&&i| i >= n) {
        return Err(Error::Index { index: bad, len: n });
    }
    let mut is_pivotal = vec![false; n];
    for &i in pivotal {
        is_pivotal[i] = true;
    }
    let mut found: Vec<Option<Complement>> = vec![None; n];
    for ip in flags_to_indices(&is_pivotal) {
        let row: Vec<f64> = a.row(ip).iter().map(|&v| v as f64).collect();
        let (q1, q3) = stats::quartiles(&row);
        let fence = q3 + outlier_lambda * (q3 - q1);
        for (j, &score) in row.iter().enumerate() {
            if score > fence && !is_pivotal[j] {
                let entry = found[j].get_or_insert_with(|| Complement {
                    index: j,
                    support: f32::NEG_INFINITY,
                    sources: Vec::new(),
                });
                entry.sources.push(ip);
                entry.support = entry.support.max(a.get(ip, j));
            }
        }
    }
    Ok(found.into_iter().flatten().collect())
}

/// Full two-stage selection over a trace.
pub fn select_tokens(trace: &EncoderTrace, config: &SelectionConfig) -> Result<SelectionResult> {
    let cfg = config.resolve(trace.num_layers())?;
    let n = trace.tokens();
    let pivotal = pivotal_from(trace, &cfg);
    let mut complements = select_complementary(
        trace.layer(cfg.complement_layer),
        &pivotal.indices,
        cfg.outlier_lambda,
    )?;
    let mut kept_pivotal = pivotal.indices.clone();

    let mut dropped = Vec::new();
    if let Some(cap) = cfg.max_tokens {
        let excess = (kept_pivotal.len() + complements.len()).saturating_sub(cap);
        // weakest support first; among equals the higher index goes first
        let mut order: Vec<usize> = (0..complements.len()).collect();
        order.sort_by(|&x, &y| {
            let (cx, cy) = (&complements[x], &complements[y]);
            cx.support
                .partial_cmp(&cy.support)
                .unwrap_or(Ordering::Equal)
                .then(cy.index.cmp(&cx.index))
        });
        let from_complements = excess.min(complements.len());
        let mut drop_flag = vec![false; complements.len()];
        for &x in &order[..from_complements] {
            drop_flag[x] = true;
            dropped.push(complements[x].index);
        }
        let mut it = drop_flag.iter();
        complements.retain(|_| !*it.next().unwrap());

        let from_pivotal = excess - from_complements;
        if from_pivotal > 0 {
            let agg = &pivotal.aggregate_r;
            let mut order = kept_pivotal.clone();
            order.sort_by(|&x, &y| {
                agg[x]
                    .partial_cmp(&agg[y])
                    .unwrap_or(Ordering::Equal)
                    .then(y.cmp(&x))
            });
            let gone = &order[..from_pivotal];
            dropped.extend_from_slice(gone);
            kept_pivotal.retain(|i| !gone.contains(i));
        }
    }

    let complementary: Vec<usize> = complements.iter().map(|c| c.index).collect();
    let mut provenance: Vec<Provenance> = kept_pivotal
        .iter()
        .map(|&i| Provenance {
            index: i,
            kind: TokenKind::Pivotal,
            layers: pivotal
                .per_layer
                .iter()
                .filter(|p| p.indices.binary_search(&i).is_ok())
                .map(|p| p.layer)
                .collect(),
            sources: Vec::new(),
            support: None,
        })
        .chain(complements.into_iter().map(|c| Provenance {
            index: c.index,
            kind: TokenKind::Complementary,
            layers: Vec::new(),
            sources: c.sources,
            support: Some(c.support),
        }))
        .collect();
    provenance.sort_by_key(|p| p.index);
    let selected = provenance.iter().map(|p| p.index).collect();

    Ok(SelectionResult {
        n,
        per_layer: pivotal.per_layer,
        pivotal: kept_pivotal,
        complementary,
        selected,
        dropped,
        provenance,
    })
}

/// Copies the rows at `indices` in ascending index order. Values are not
/// modified.
pub fn gather(embeddings: &Matrix, indices: &[usize]) -> Result<Matrix> {
    let n = embeddings.rows();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::Index { index: bad, len: n });
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut data = Vec::with_capacity(sorted.len() * embeddings.cols());
    for &i in &sorted {
        data.extend_from_slice(embeddings.row(i));
    }
    Ok(Matrix::from_parts(sorted.len(), embeddings.cols(), data))
}

fn flags_to_indices(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| f.then_some(i))
        .collect()
}
