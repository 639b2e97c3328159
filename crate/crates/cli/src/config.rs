//! Run configuration, read from a versioned TOML file.

use std::path::{Path, PathBuf};

use pmtk_core::cost::{IMAGE_VISUAL_TOKENS, TEXT_TOKENS};
use pmtk_core::{EncoderConfig, HardwareSpec, ModelSpec, SelectionConfig, SyntheticPattern};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    #[serde(default)]
    input: RawInput,
    #[serde(default)]
    encoder: EncoderConfig,
    #[serde(default)]
    selection: SelectionConfig,
    model: Option<SpecSource<ModelSpec>>,
    hardware: Option<SpecSource<HardwareSpec>>,
    #[serde(default)]
    profile: ProfileConfig,
    #[serde(default)]
    cost: CostConfig,
    #[serde(default)]
    output: OutputConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    pattern: Option<String>,
    path: Option<PathBuf>,
}

/// A bundled preset name, a path to a spec file, or the spec written inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SpecSource<T> {
    Named(String),
    Inline(T),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputConfig {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub bins: usize,
    /// Histogram upper edge; defaults to the largest `r` over all layers.
    pub hist_max: Option<f64>,
    /// Token indices to trace across layers; all tokens when absent.
    pub trajectories: Option<Vec<usize>>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            bins: 20,
            hist_max: None,
            trajectories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub visual_tokens: usize,
    pub text_tokens: usize,
    /// Share of visual tokens kept. The pipeline uses the selection's
    /// `m / n` when this is absent; `cost` alone falls back to 0.5.
    pub keep_fraction: Option<f64>,
    /// Extra storage widths to report, e.g. `[2.0, 0.5]` for FP16 and INT4.
    pub bytes_per_param: Vec<f64>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            visual_tokens: IMAGE_VISUAL_TOKENS,
            text_tokens: TEXT_TOKENS,
            keep_fraction: None,
            bytes_per_param: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Pattern(SyntheticPattern),
    Path(PathBuf),
}

impl Input {
    /// How the input is named in reports; paths appear as written in the config.
    pub fn label(&self, written: &str) -> String {
        match self {
            Input::Pattern(p) => format!("pattern:{}", p.name()),
            Input::Path(_) => format!("file:{written}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Input,
    pub input_label: String,
    pub encoder: EncoderConfig,
    pub selection: SelectionConfig,
    pub model: Option<ModelSpec>,
    pub hardware: HardwareSpec,
    pub profile: ProfileConfig,
    pub cost: CostConfig,
    pub output_dir: Option<PathBuf>,
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn resolve_spec<T>(
    src: SpecSource<T>,
    base: &Path,
    preset: fn(&str) -> Option<T>,
    parse: fn(&str) -> pmtk_core::Result<T>,
    validate: fn(&T) -> pmtk_core::Result<()>,
) -> CliResult<T> {
    match src {
        SpecSource::Inline(spec) => {
            validate(&spec)?;
            Ok(spec)
        }
        SpecSource::Named(name) => {
            if let Some(spec) = preset(&name) {
                return Ok(spec);
            }
            let path = base.join(&name);
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "{name:?} is neither a bundled preset nor an existing spec file"
                )));
            }
            parse(&read_text(&path)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses `text`; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "config: schema_version {} is not supported (expected {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        raw.encoder.validate()?;
        raw.selection.resolve(raw.encoder.layers)?;

        let (input, input_label) = match (raw.input.pattern, raw.input.path) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "config: input.pattern and input.path are mutually exclusive".into(),
                ))
            }
            (None, Some(p)) => {
                let full = base.join(&p);
                if !full.is_file() {
                    return Err(CliError::Usage(format!(
                        "config: input.path {} does not exist",
                        full.display()
                    )));
                }
                let label = p.display().to_string();
                let input = Input::Path(full);
                let label = input.label(&label);
                (input, label)
            }
            (pattern, None) => {
                let name = pattern.unwrap_or_else(|| "noise".into());
                let p: SyntheticPattern = name
                    .parse()
                    .map_err(|e: pmtk_core::Error| CliError::Usage(e.to_string()))?;
                let input = Input::Pattern(p);
                let label = input.label(&name);
                (input, label)
            }
        };

        let model = raw
            .model
            .map(|m| {
                resolve_spec(
                    m,
                    base,
                    ModelSpec::preset,
                    ModelSpec::from_toml,
                    ModelSpec::validate,
                )
            })
            .transpose()?;
        let hardware = resolve_spec(
            raw.hardware.unwrap_or(SpecSource::Named("a6000".into())),
            base,
            HardwareSpec::preset,
            HardwareSpec::from_toml,
            HardwareSpec::validate,
        )?;

        if raw.profile.bins == 0 {
            return Err(CliError::Usage(
                "config: profile.bins must be at least 1".into(),
            ));
        }
        if let Some(hi) = raw.profile.hist_max {
            if !(hi > 0.0 && hi.is_finite()) {
                return Err(CliError::Usage(
                    "config: profile.hist_max must be positive".into(),
                ));
            }
        }
        if let Some(f) = raw.cost.keep_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(CliError::Usage(format!(
                    "config: cost.keep_fraction {f} must lie in [0, 1]"
                )));
            }
        }
        if raw
            .cost
            .bytes_per_param
            .iter()
            .any(|b| !(*b > 0.0 && b.is_finite()))
        {
            return Err(CliError::Usage(
                "config: cost.bytes_per_param entries must be positive".into(),
            ));
        }

        Ok(Self {
            input,
            input_label,
            encoder: raw.encoder,
            selection: raw.selection,
            model,
            hardware,
            profile: raw.profile,
            cost: raw.cost,
            output_dir: raw.output.dir.map(|d| base.join(d)),
        })
    }
}
