//! The five subcommands. Each writes its files under the output directory
//! and returns what it computed so callers can chain them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use pmtk_core::cost::{compare, SpeedupReport, FORMULAS};
use pmtk_core::encoder::{encode, Image};
use pmtk_core::select::{
    gather, profile_layers, select_tokens, trajectories, LayerPick, Provenance, ResolvedSelection,
    Trajectory,
};
use pmtk_core::stats::{histogram, Histogram};
use pmtk_core::tensorfile::write_atomic;
use pmtk_core::{
    read_tensor, write_tensor, AttentionMatrix, EncoderTrace, HardwareSpec, Matrix, ModelSpec,
    SelectionResult, Tensor, TokenKind,
};
use serde::Serialize;

use crate::config::{Input, RunConfig};
use crate::error::{CliError, CliResult};
use crate::fmt::{sig, to_json};

pub const TRACE_DIR: &str = "trace";
pub const EMBEDDINGS_FILE: &str = "embeddings.pmtk";

pub fn attention_file(layer: usize) -> String {
    format!("attn_layer_{layer}.pmtk")
}

/// Resolved settings shared by every command.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn ensure_out(&self, sub: Option<&str>) -> CliResult<PathBuf> {
        let dir = match sub {
            Some(s) => self.out.join(s),
            None => self.out.clone(),
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let path = self.ensure_out(None)?.join(name);
        write_atomic(&path, text.as_bytes()).map_err(|e| CliError::io(&path, e))?;
        debug!("wrote {}", path.display());
        Ok(())
    }

    fn write_matrix(&self, dir: &Path, name: &str, m: &Matrix) -> CliResult<()> {
        write_tensor(&Tensor::from(m), dir.join(name))?;
        Ok(())
    }
}

pub fn load_image(config: &RunConfig) -> CliResult<Image> {
    let enc = &config.encoder;
    match &config.input {
        Input::Pattern(p) => Ok(p.render(enc.image_size, enc.channels, enc.seed)),
        Input::Path(path) => Ok(Image::try_from(read_tensor(path)?)?),
    }
}

/// Runs the encoder and writes `trace/attn_layer_{l}.pmtk` and `trace/embeddings.pmtk`.
pub fn cmd_encode(ctx: &Context) -> CliResult<EncoderTrace> {
    let image = load_image(&ctx.config)?;
    info!(
        "encoding {} with {} layers",
        ctx.config.input_label, ctx.config.encoder.layers
    );
    let trace = encode(&image, &ctx.config.encoder)?;
    let dir = ctx.ensure_out(Some(TRACE_DIR))?;
    for (l, a) in trace.attention().iter().enumerate() {
        ctx.write_matrix(&dir, &attention_file(l), a.as_matrix())?;
    }
    ctx.write_matrix(&dir, EMBEDDINGS_FILE, trace.embeddings())?;
    ctx.say(format!(
        "encode: {} tokens x {} layers -> {}",
        trace.tokens(),
        trace.num_layers(),
        dir.display()
    ));
    Ok(trace)
}

fn read_matrix(path: &Path) -> CliResult<Matrix> {
    Matrix::try_from(read_tensor(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Loads a trace written by `encode` (or by an external encoder in the same layout).
pub fn read_trace(dir: &Path) -> CliResult<EncoderTrace> {
    let mut attention = Vec::new();
    loop {
        let path = dir.join(attention_file(attention.len()));
        if !path.is_file() {
            break;
        }
        let a = AttentionMatrix::new(read_matrix(&path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        attention.push(a);
    }
    if attention.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no {} found",
            dir.display(),
            attention_file(0)
        )));
    }
    let embeddings = read_matrix(&dir.join(EMBEDDINGS_FILE))?;
    EncoderTrace::new(attention, embeddings).map_err(|e| CliError::Data(e.to_string()))
}

/// The trace from `--trace DIR`, checked against the config, or a fresh encoder pass.
pub fn obtain_trace(ctx: &Context, trace_dir: Option<&Path>) -> CliResult<EncoderTrace> {
    let Some(dir) = trace_dir else {
        let image = load_image(&ctx.config)?;
        return Ok(encode(&image, &ctx.config.encoder)?);
    };
    let trace = read_trace(dir)?;
    let enc = &ctx.config.encoder;
    if trace.tokens() != enc.tokens() {
        return Err(CliError::Data(format!(
            "trace has {} tokens, config expects {}",
            trace.tokens(),
            enc.tokens()
        )));
    }
    if trace.num_layers() != enc.layers {
        return Err(CliError::Data(format!(
            "trace has {} layers, config expects {}",
            trace.num_layers(),
            enc.layers
        )));
    }
    Ok(trace)
}

#[derive(Serialize)]
struct GridCell {
    index: usize,
    row: usize,
    col: usize,
    kind: &'static str,
}

#[derive(Serialize)]
struct SelectionReport<'a> {
    input: &'a str,
    n: usize,
    m: usize,
    kept_fraction: f64,
    config: ResolvedSelection,
    selected: &'a [usize],
    pivotal: &'a [usize],
    complementary: &'a [usize],
    dropped_by_budget: &'a [usize],
    per_layer: &'a [LayerPick],
    provenance: &'a [Provenance],
    grid_side: usize,
    grid: Vec<GridCell>,
}

fn kind_name(kind: Option<TokenKind>) -> &'static str {
    match kind {
        Some(TokenKind::Pivotal) => "pivotal",
        Some(TokenKind::Complementary) => "complementary",
        None => "discarded",
    }
}

pub fn provenance_grid(result: &SelectionResult, side: usize) -> String {
    let mut s = format!("provenance grid {side}x{side}: P pivotal, C complementary, . discarded\n");
    for row in 0..side {
        let line: Vec<&str> = (0..side)
            .map(|col| match result.kind_of(row * side + col) {
                Some(TokenKind::Pivotal) => "P",
                Some(TokenKind::Complementary) => "C",
                None => ".",
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Selects tokens and writes `selection.json`, `selected_embeddings.pmtk`
/// and `provenance_grid.txt`.
pub fn cmd_select(ctx: &Context, trace: &EncoderTrace) -> CliResult<SelectionResult> {
    let sel_cfg = &ctx.config.selection;
    let resolved = sel_cfg.resolve(trace.num_layers())?;
    let result = select_tokens(trace, sel_cfg)?;
    let side = ctx.config.encoder.grid();
    let grid = (0..result.n)
        .map(|i| GridCell {
            index: i,
            row: i / side,
            col: i % side,
            kind: kind_name(result.kind_of(i)),
        })
        .collect();
    let report = SelectionReport {
        input: &ctx.config.input_label,
        n: result.n,
        m: result.m(),
        kept_fraction: result.m() as f64 / result.n as f64,
        config: resolved,
        selected: &result.selected,
        pivotal: &result.pivotal,
        complementary: &result.complementary,
        dropped_by_budget: &result.dropped,
        per_layer: &result.per_layer,
        provenance: &result.provenance,
        grid_side: side,
        grid,
    };
    ctx.write_text("selection.json", &to_json(&report)?)?;
    let kept = gather(trace.embeddings(), &result.selected)?;
    let dir = ctx.ensure_out(None)?;
    ctx.write_matrix(&dir, "selected_embeddings.pmtk", &kept)?;
    ctx.write_text("provenance_grid.txt", &provenance_grid(&result, side))?;
    ctx.say(format!(
        "select: kept {} of {} tokens ({} pivotal, {} complementary, layers {}..={})",
        result.m(),
        result.n,
        result.pivotal.len(),
        result.complementary.len(),
        resolved.start_layer,
        resolved.end_layer
    ));
    Ok(result)
}

#[derive(Serialize)]
struct LayerSummary {
    layer: usize,
    mean: f64,
    max: f64,
    gini: f64,
    histogram: Histogram,
}

#[derive(Serialize)]
pub struct ProfileReport {
    input: String,
    n: usize,
    layers: Vec<LayerSummary>,
    trajectories: Vec<Trajectory>,
}

impl ProfileReport {
    pub fn gini(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.gini).collect()
    }
}

/// Writes per-layer `r` histograms and per-token trajectories to `profile.json`.
pub fn cmd_profile(ctx: &Context, trace: &EncoderTrace) -> CliResult<ProfileReport> {
    let cfg = &ctx.config.profile;
    let profiles = profile_layers(trace);
    let top = profiles.iter().map(|p| p.max).fold(0.0, f64::max);
    let hi = cfg.hist_max.unwrap_or(if top > 0.0 { top } else { 1.0 });
    let layers = profiles
        .iter()
        .map(|p| {
            let r: Vec<f64> = p.r.iter().map(|&v| v as f64).collect();
            LayerSummary {
                layer: p.layer,
                mean: p.mean,
                max: p.max,
                gini: p.gini,
                histogram: histogram(&r, 0.0, hi, cfg.bins),
            }
        })
        .collect();
    let n = trace.tokens();
    let wanted: Vec<usize> = cfg.trajectories.clone().unwrap_or_else(|| (0..n).collect());
    if let Some(bad) = wanted.iter().find(|&&i| i >= n) {
        warn!("profile.trajectories index {bad} is out of range for {n} tokens; skipped");
    }
    let report = ProfileReport {
        input: ctx.config.input_label.clone(),
        n,
        layers,
        trajectories: trajectories(&profiles, &wanted),
    };
    ctx.write_text("profile.json", &to_json(&report)?)?;
    let gini: Vec<String> = report.gini().iter().map(|&g| sig(g)).collect();
    ctx.say(format!("profile: gini by layer [{}]", gini.join(", ")));
    Ok(report)
}

#[derive(Serialize)]
struct Assumptions {
    visual_tokens: usize,
    text_tokens: usize,
    keep_fraction: f64,
    keep_fraction_source: &'static str,
    reduced_visual_tokens: usize,
    n_full: usize,
    n_reduced: usize,
    note: &'static str,
}

#[derive(Serialize)]
struct Formula {
    name: &'static str,
    formula: &'static str,
}

#[derive(Serialize)]
struct PrecisionRow {
    bytes_per_param: f64,
    #[serde(flatten)]
    report: SpeedupReport,
}

#[derive(Serialize)]
pub struct CostFile {
    model: ModelSpec,
    hardware: HardwareSpec,
    assumptions: Assumptions,
    formulas: Vec<Formula>,
    rows: Vec<PrecisionRow>,
}

impl CostFile {
    pub fn primary(&self) -> &SpeedupReport {
        &self.rows[0].report
    }
}

fn cost_table(c: &CostFile) -> String {
    let a = &c.assumptions;
    let mut s = String::new();
    let _ = writeln!(s, "cost: {} on {}", c.model.name, c.hardware.name);
    let _ = writeln!(
        s,
        "tokens (assumed): full = {} visual + {} text = {}; reduced = {} visual + {} text = {} (keep {} from {})",
        a.visual_tokens,
        a.text_tokens,
        a.n_full,
        a.reduced_visual_tokens,
        a.text_tokens,
        a.n_reduced,
        sig(a.keep_fraction),
        a.keep_fraction_source
    );
    let _ = writeln!(
        s,
        "{:>8} {:>8} {:>7} {:>10} {:>12} {:>8} {:>10} {:>10} {:>10}",
        "bytes",
        "case",
        "tokens",
        "OPs(TB)",
        "prefill(ms)",
        "bound",
        "mem(GB)",
        "act(GB)",
        "kv(GB)"
    );
    for row in &c.rows {
        for (case, r) in [("full", &row.report.full), ("reduced", &row.report.reduced)] {
            let bound = format!("{:?}", r.bound).to_lowercase();
            let _ = writeln!(
                s,
                "{:>8} {:>8} {:>7} {:>10} {:>12} {:>8} {:>10} {:>10} {:>10}",
                sig(row.bytes_per_param),
                case,
                r.n_tokens,
                sig(r.ops_total),
                sig(r.prefill_ms),
                bound,
                sig(r.mem_access_gb),
                sig(r.activation_gb),
                sig(r.kv_cache_gb)
            );
        }
        let q = &row.report.ratios;
        let _ = writeln!(
            s,
            "{:>8} full/reduced: OPs x{}, prefill x{}, memory x{}, activation x{}",
            sig(row.bytes_per_param),
            sig(q.ops),
            sig(q.prefill),
            sig(q.mem_access),
            sig(q.activation)
        );
    }
    let _ = writeln!(
        s,
        "formulas (n tokens, d hidden, f ffn_dim, g ffn matrices, h heads, b bytes/param):"
    );
    for f in &c.formulas {
        let _ = writeln!(s, "  {} = {}", f.name, f.formula);
    }
    s
}

/// Full-versus-reduced prefill comparison; writes `cost.json` and `cost.txt`.
///
/// `selected_fraction` comes from a selection run and is used when the
/// config gives no `cost.keep_fraction`.
pub fn cmd_cost(ctx: &Context, selected_fraction: Option<f64>) -> CliResult<CostFile> {
    let cfg = &ctx.config.cost;
    let model = ctx.config.model.clone().ok_or_else(|| {
        CliError::Usage("cost needs a model: set model = \"vicuna-13b\" or a spec table".into())
    })?;
    let hardware = ctx.config.hardware.clone();
    let (keep, source) = match (cfg.keep_fraction, selected_fraction) {
        (Some(f), _) => (f, "config"),
        (None, Some(f)) => (f, "selection"),
        (None, None) => (0.5, "default"),
    };
    let reduced_visual = (keep * cfg.visual_tokens as f64).round() as usize;
    let n_full = cfg.visual_tokens + cfg.text_tokens;
    let n_reduced = reduced_visual + cfg.text_tokens;
    let mut widths = vec![model.bytes_per_param];
    for &b in &cfg.bytes_per_param {
        if !widths.contains(&b) {
            widths.push(b);
        }
    }
    let rows = widths
        .into_iter()
        .map(|b| {
            let m = model.with_bytes_per_param(b);
            Ok(PrecisionRow {
                bytes_per_param: b,
                report: compare(&m, &hardware, n_full, n_reduced)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let file = CostFile {
        model,
        hardware,
        assumptions: Assumptions {
            visual_tokens: cfg.visual_tokens,
            text_tokens: cfg.text_tokens,
            keep_fraction: keep,
            keep_fraction_source: source,
            reduced_visual_tokens: reduced_visual,
            n_full,
            n_reduced,
            note: "token counts are assumed, not measured",
        },
        formulas: FORMULAS
            .iter()
            .map(|&(name, formula)| Formula { name, formula })
            .collect(),
        rows,
    };
    ctx.write_text("cost.json", &to_json(&file)?)?;
    let table = cost_table(&file);
    ctx.write_text("cost.txt", &table)?;
    if !ctx.quiet {
        print!("{table}");
    }
    Ok(file)
}

/// encode, select, profile, then cost when a model is configured.
pub fn cmd_pipeline(ctx: &Context) -> CliResult<()> {
    let trace = cmd_encode(ctx)?;
    let selection = cmd_select(ctx, &trace)?;
    cmd_profile(ctx, &trace)?;
    if ctx.config.model.is_some() {
        cmd_cost(ctx, Some(selection.m() as f64 / selection.n as f64))?;
    } else {
        info!("no model configured; skipping cost");
    }
    Ok(())
}
