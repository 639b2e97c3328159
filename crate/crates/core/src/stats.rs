//! Small descriptive statistics used by the selector and the profiler.

use serde::Serialize;

/// Type-7 quantile: linear interpolation between order statistics of
/// `sorted` (ascending). `p` must lie in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    debug_assert!((0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// First and third quartiles (type-7).
pub fn quartiles(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.75),
    )
}

/// Gini coefficient of a nonnegative sample; 0 for empty or all-zero input.
///
/// Computed from the Lorenz curve of the ascending sample:
/// `G = 1 − (2·Σ cumulative − total) / (n·total)`.
pub fn gini(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if sorted.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let n = sorted.len() as f64;
    let mut running = 0.0;
    let mut area = 0.0;
    for v in &sorted {
        running += v;
        area += running;
    }
    1.0 - (2.0 * area - total) / (n * total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over `[lo, hi]`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
    assert!(bins > 0 && hi > lo);
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}
