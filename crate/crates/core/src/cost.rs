//! Roofline estimate of LLM prefill cost as a function of input token count.
//!
//! Operation counts use two operations per multiply-accumulate. Per layer,
//! with `n` tokens, hidden width `d`, FFN width `f`, `g` FFN weight
//! matrices (2 for a plain MLP, 3 for a gated one) and `h` heads:
//!
//! * projections `Q, K, V, O`: `8·n·d²`
//! * attention scores and weighted values: `4·n²·d`
//! * FFN: `2·g·n·d·f`
//!
//! plus an LM head of `2·n·d·vocab` once. Latency is the larger of compute
//! time (`ops / peak_flops`) and memory time (`bytes / bandwidth`), where
//! bytes are the weights plus every stored activation written once and read
//! once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TERA: f64 = 1e12;
const GIGA: f64 = 1e9;

/// Human-readable statement of every formula, for report metadata.
pub const FORMULAS: &[(&str, &str)] = &[
    (
        "ops_per_layer",
        "8*n*d^2 (QKV+O) + 4*n^2*d (scores, values) + 2*g*n*d*f (FFN, g weight matrices)",
    ),
    ("ops_total", "layers * ops_per_layer + 2*n*d*vocab (LM head); 2 ops per MAC"),
    (
        "activation_bytes",
        "layers * b * (n*(10*d + g*f) + 2*h*n^2): q,k,v,attn,o, 2 norms, 2 residuals, FFN outputs, scores and softmax",
    ),
    ("kv_cache_bytes", "2 * layers * n * d * b (included in activation_bytes)"),
    ("weight_bytes", "param_count * b"),
    ("mem_access_bytes", "weight_bytes + 2 * activation_bytes (each activation written and read once)"),
    ("compute_ms", "1e3 * ops_total / peak_flops"),
    ("memory_ms", "1e3 * mem_access_bytes / mem_bandwidth"),
    ("prefill_ms", "max(compute_ms, memory_ms)"),
];

/// Visual tokens from a 336px image at patch 14 (24×24 grid).
pub const IMAGE_VISUAL_TOKENS: usize = 576;
/// Visual tokens for an 8-frame video input.
pub const VIDEO_VISUAL_TOKENS: usize = 2048;
/// Assumed prompt length in text tokens.
pub const TEXT_TOKENS: usize = 35;

const VICUNA_7B: &str = include_str!("../specs/vicuna-7b.toml");
const VICUNA_13B: &str = include_str!("../specs/vicuna-13b.toml");
const A6000: &str = include_str!("../specs/a6000.toml");

fn default_ffn_matrices() -> usize {
    2
}

/// LLM backbone shape and storage width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Weight matrices in the FFN: 2 for `W₂·σ(W₁·x)`, 3 for gated variants.
    #[serde(default = "default_ffn_matrices")]
    pub ffn_matrices: usize,
    /// LM-head width; 0 leaves the head out.
    #[serde(default)]
    pub vocab_size: usize,
    /// Bytes per weight and per activation element (2.0 for FP16, 0.5 for INT4).
    pub bytes_per_param: f64,
    pub param_count: u64,
}

impl ModelSpec {
    /// Bundled specs: `vicuna-7b`, `vicuna-13b`.
    pub fn preset(name: &str) -> Option<Self> {
        let src = match name {
            "vicuna-7b" => VICUNA_7B,
            "vicuna-13b" => VICUNA_13B,
            _ => return None,
        };
        Some(Self::from_toml(src).expect("bundled model spec parses"))
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        let spec: Self = toml::from_str(src).map_err(|e| Error::config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.ffn_dim == 0 {
            return Err(Error::config(format!(
                "model {}: dimensions must be positive",
                self.name
            )));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "model {}: hidden {} not divisible by heads {}",
                self.name, self.hidden, self.heads
            )));
        }
        if self.ffn_matrices == 0 {
            return Err(Error::config(format!(
                "model {}: ffn_matrices must be positive",
                self.name
            )));
        }
        if !(self.bytes_per_param > 0.0 && self.bytes_per_param.is_finite())
            || self.param_count == 0
        {
            return Err(Error::config(format!(
                "model {}: bytes_per_param and param_count must be positive",
                self.name
            )));
        }
        Ok(())
    }

    /// Same architecture stored at a different width.
    pub fn with_bytes_per_param(&self, bytes: f64) -> Self {
        Self {
            bytes_per_param: bytes,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub name: String,
    /// Operations per second at the model's precision.
    pub peak_flops: f64,
    /// Bytes per second.
    pub mem_bandwidth: f64,
}

impl HardwareSpec {
    /// Bundled specs: `a6000`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "a6000" => Some(Self::from_toml(A6000).expect("bundled hardware spec parses")),
            _ => None,
        }
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        let spec: Self = toml::from_str(src).map_err(|e| Error::config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Positive throughput and bandwidth; infinity is allowed.
    pub fn validate(&self) -> Result<()> {
        if self.peak_flops.is_nan()
            || self.peak_flops <= 0.0
            || self.mem_bandwidth.is_nan()
            || self.mem_bandwidth <= 0.0
        {
            return Err(Error::config(format!(
                "hardware {}: peak_flops and mem_bandwidth must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Compute,
    Memory,
}

fn raw_ops(model: &ModelSpec, n: usize) -> f64 {
    let n = n as f64;
    let d = model.hidden as f64;
    let f = model.ffn_dim as f64;
    let g = model.ffn_matrices as f64;
    let per_layer = 8.0 * n * d * d + 4.0 * n * n * d + 2.0 * g * n * d * f;
    model.layers as f64 * per_layer + 2.0 * n * d * model.vocab_size as f64
}

/// Prefill operations in tera-operations (1e12).
pub fn prefill_ops(model: &ModelSpec, n_tokens: usize) -> f64 {
    raw_ops(model, n_tokens) / TERA
}

fn activation_elements(model: &ModelSpec, n: usize) -> f64 {
    let n = n as f64;
    let d = model.hidden as f64;
    let per_token = 10.0 * d + (model.ffn_matrices * model.ffn_dim) as f64;
    let scores = 2.0 * model.heads as f64 * n * n;
    model.layers as f64 * (n * per_token + scores)
}

/// Activations stored during prefill, in gigabytes (1e9). Includes the KV cache.
pub fn activation_bytes(model: &ModelSpec, n_tokens: usize) -> f64 {
    activation_elements(model, n_tokens) * model.bytes_per_param / GIGA
}

/// KV cache alone, in gigabytes.
pub fn kv_cache_bytes(model: &ModelSpec, n_tokens: usize) -> f64 {
    2.0 * (model.layers * n_tokens * model.hidden) as f64 * model.bytes_per_param / GIGA
}

pub fn weight_bytes(model: &ModelSpec) -> f64 {
    model.param_count as f64 * model.bytes_per_param / GIGA
}

/// Weights plus activation traffic, in gigabytes.
pub fn memory_access_bytes(model: &ModelSpec, n_tokens: usize) -> f64 {
    weight_bytes(model) + 2.0 * activation_bytes(model, n_tokens)
}

/// Roofline latency in milliseconds and the side that binds.
pub fn prefill_time(
    model: &ModelSpec,
    hardware: &HardwareSpec,
    n_tokens: usize,
) -> Result<(f64, Bound)> {
    let r = estimate(model, hardware, n_tokens)?;
    Ok((r.prefill_ms, r.bound))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub n_tokens: usize,
    /// Tera-operations.
    pub ops_total: f64,
    pub compute_ms: f64,
    pub memory_ms: f64,
    pub prefill_ms: f64,
    pub bound: Bound,
    /// Gigabytes.
    pub mem_access_gb: f64,
    pub activation_gb: f64,
    pub kv_cache_gb: f64,
    pub weight_gb: f64,
}

pub fn estimate(model: &ModelSpec, hardware: &HardwareSpec, n_tokens: usize) -> Result<CostReport> {
    model.validate()?;
    hardware.validate()?;
    let ops_total = prefill_ops(model, n_tokens);
    let mem_access_gb = memory_access_bytes(model, n_tokens);
    let compute_ms = 1e3 * ops_total * TERA / hardware.peak_flops;
    let memory_ms = 1e3 * mem_access_gb * GIGA / hardware.mem_bandwidth;
    let (prefill_ms, bound) = if compute_ms >= memory_ms {
        (compute_ms, Bound::Compute)
    } else {
        (memory_ms, Bound::Memory)
    };
    Ok(CostReport {
        n_tokens,
        ops_total,
        compute_ms,
        memory_ms,
        prefill_ms,
        bound,
        mem_access_gb,
        activation_gb: activation_bytes(model, n_tokens),
        kv_cache_gb: kv_cache_bytes(model, n_tokens),
        weight_gb: weight_bytes(model),
    })
}

/// Full-over-reduced ratio per column; values above 1 mean the reduction helps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ratios {
    pub ops: f64,
    pub prefill: f64,
    pub mem_access: f64,
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupReport {
    pub full: CostReport,
    pub reduced: CostReport,
    pub ratios: Ratios,
}

fn ratio(full: f64, reduced: f64) -> f64 {
    if full == reduced {
        1.0
    } else {
        full / reduced
    }
}

pub fn compare(
    model: &ModelSpec,
    hardware: &HardwareSpec,
    n_full: usize,
    n_reduced: usize,
) -> Result<SpeedupReport> {
    if n_reduced > n_full {
        return Err(Error::config(format!(
            "reduced token count {n_reduced} exceeds full count {n_full}"
        )));
    }
    let full = estimate(model, hardware, n_full)?;
    let reduced = estimate(model, hardware, n_reduced)?;
    let ratios = Ratios {
        ops: ratio(full.ops_total, reduced.ops_total),
        prefill: ratio(full.prefill_ms, reduced.prefill_ms),
        mem_access: ratio(full.mem_access_gb, reduced.mem_access_gb),
        activation: ratio(full.activation_gb, reduced.activation_gb),
    };
    Ok(SpeedupReport {
        full,
        reduced,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vicuna13() -> ModelSpec {
        ModelSpec::preset("vicuna-13b").unwrap()
    }

    fn a6000() -> HardwareSpec {
        HardwareSpec::preset("a6000").unwrap()
    }

    #[test]
    fn presets_load() {
        assert_eq!(vicuna13().layers, 40);
        assert_eq!(ModelSpec::preset("vicuna-7b").unwrap().hidden, 4096);
        assert_eq!(a6000().mem_bandwidth, 768e9);
        assert!(ModelSpec::preset("gpt-5").is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err =
            HardwareSpec::from_toml("name='x'\npeak_flops=1.0\nmem_bandwidth=1.0\ncolor='red'")
                .unwrap_err();
        assert!(err.to_string().contains("color"));
    }

    #[test]
    fn zero_tokens_cost_nothing_but_weights() {
        let m = vicuna13();
        assert_eq!(prefill_ops(&m, 0), 0.0);
        assert_eq!(activation_bytes(&m, 0), 0.0);
        assert_eq!(memory_access_bytes(&m, 0), weight_bytes(&m));
    }

    #[test]
    fn doubling_ratio_tracks_dominant_term() {
        let quad = ModelSpec {
            name: "quad".into(),
            layers: 1,
            hidden: 8,
            heads: 1,
            ffn_dim: 8,
            ffn_matrices: 2,
            vocab_size: 0,
            bytes_per_param: 2.0,
            param_count: 1,
        };
        let r = prefill_ops(&quad, 200_000) / prefill_ops(&quad, 100_000);
        assert!((r - 4.0).abs() < 0.01, "{r}");
        let r = prefill_ops(&vicuna13(), 20) / prefill_ops(&vicuna13(), 10);
        assert!((r - 2.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn infinite_bandwidth_is_pure_compute() {
        let hw = HardwareSpec {
            mem_bandwidth: f64::INFINITY,
            ..a6000()
        };
        let r = estimate(&vicuna13(), &hw, 611).unwrap();
        assert_eq!(r.memory_ms, 0.0);
        assert_eq!(r.prefill_ms, r.compute_ms);
        assert_eq!(r.bound, Bound::Compute);
    }

    #[test]
    fn zero_hardware_rejected() {
        let hw = HardwareSpec {
            peak_flops: 0.0,
            ..a6000()
        };
        assert!(prefill_time(&vicuna13(), &hw, 10).is_err());
        let hw = HardwareSpec {
            mem_bandwidth: 0.0,
            ..a6000()
        };
        assert!(prefill_time(&vicuna13(), &hw, 10).is_err());
    }

    #[test]
    fn int4_ratio_on_cache_is_four() {
        let fp16 = vicuna13();
        let int4 = fp16.with_bytes_per_param(0.5);
        let r = kv_cache_bytes(&fp16, 611) / kv_cache_bytes(&int4, 611);
        assert!((r - 4.0).abs() < 1e-12);
        assert_eq!(prefill_ops(&fp16, 611), prefill_ops(&int4, 611));
    }

    #[test]
    fn identical_counts_give_unit_ratios() {
        let s = compare(&vicuna13(), &a6000(), 500, 500).unwrap();
        assert_eq!(
            (
                s.ratios.ops,
                s.ratios.prefill,
                s.ratios.mem_access,
                s.ratios.activation
            ),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert!(compare(&vicuna13(), &a6000(), 10, 11).is_err());
    }

    proptest! {
        #[test]
        fn ops_increasing_and_convex(n in 0usize..5000) {
            let m = vicuna13();
            let (a, b, c) = (prefill_ops(&m, n), prefill_ops(&m, n + 1), prefill_ops(&m, n + 2));
            prop_assert!(b > a);
            prop_assert!(c - 2.0 * b + a >= -1e-9 * c);
        }

        #[test]
        fn roofline_is_max_of_bounds(n in 0usize..10_000, bw in 1e9f64..1e13) {
            let hw = HardwareSpec { mem_bandwidth: bw, ..a6000() };
            let r = estimate(&vicuna13(), &hw, n).unwrap();
            prop_assert!(r.prefill_ms >= r.compute_ms && r.prefill_ms >= r.memory_ms);
            prop_assert!(r.prefill_ms == r.compute_ms || r.prefill_ms == r.memory_ms);
        }

        #[test]
        fn reduction_never_increases_any_field(full in 1usize..4000, frac in 0.0f64..=1.0) {
            let reduced = (full as f64 * frac) as usize;
            let s = compare(&vicuna13(), &a6000(), full, reduced).unwrap();
            prop_assert!(s.reduced.ops_total <= s.full.ops_total);
            prop_assert!(s.reduced.prefill_ms <= s.full.prefill_ms);
            prop_assert!(s.reduced.mem_access_gb <= s.full.mem_access_gb);
            prop_assert!(s.reduced.activation_gb <= s.full.activation_gb);
            prop_assert!(s.reduced.kv_cache_gb <= s.full.kv_cache_gb);
        }
    }
}
