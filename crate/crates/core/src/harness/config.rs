use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::agent::{AgentConfig, AgentError};
use crate::graph::{build_resnet_like_with_classes, ModelGraph, TensorShape, DEFAULT_NUM_CLASSES};
use crate::platform::PlatformSet;
use crate::Error;

/// Prefix that selects a shipped platform config instead of a file.
pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Cpu,
    Gpu,
    FpgaAgent,
    FpgaHeuristic,
    FpgaOracle,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Cpu,
        Mode::Gpu,
        Mode::FpgaAgent,
        Mode::FpgaHeuristic,
        Mode::FpgaOracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cpu => "cpu",
            Mode::Gpu => "gpu",
            Mode::FpgaAgent => "fpga-agent",
            Mode::FpgaHeuristic => "fpga-heuristic",
            Mode::FpgaOracle => "fpga-oracle",
        }
    }

    /// Column label in reports.
    pub fn label(self) -> &'static str {
        match self {
            Mode::Cpu => "CPU",
            Mode::Gpu => "GPU",
            Mode::FpgaAgent => "AI_FPGA_Agent",
            Mode::FpgaHeuristic => "FPGA_Heuristic",
            Mode::FpgaOracle => "FPGA_Oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode '{s}' (expected cpu, gpu, fpga-agent, fpga-heuristic or fpga-oracle)"))
    }
}

/// Either a model file or the residual generator's parameters. A set
/// `path` wins; the generator fields are then ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub num_blocks: usize,
    pub base_channels: usize,
    pub input_shape: [usize; 4],
    pub num_classes: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            path: None,
            num_blocks: 4,
            base_channels: 16,
            input_shape: [1, 3, 32, 32],
            num_classes: DEFAULT_NUM_CLASSES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformSection {
    /// `builtin:<name>` or a path to a platform TOML file.
    pub source: String,
}

impl Default for PlatformSection {
    fn default() -> Self {
        Self {
            source: format!("{BUILTIN_PREFIX}paper_calibrated"),
        }
    }
}

/// Accuracy benchmark: a class-conditional synthetic task, a classifier
/// head fitted on a training split, and int8 calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantSection {
    pub calibration_samples: usize,
    pub train_samples: usize,
    /// Within-class variation relative to the class prototypes.
    pub class_spread: f64,
    /// Largest accepted |int8 - float| top-1 gap, in percentage points.
    pub accuracy_threshold_points: f64,
    pub scale_epsilon: f64,
}

impl Default for QuantSection {
    fn default() -> Self {
        Self {
            calibration_samples: 128,
            train_samples: 500,
            class_spread: 0.75,
            accuracy_threshold_points: 0.5,
            scale_epsilon: crate::quant::DEFAULT_SCALE_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline_csv: Option<PathBuf>,
}

/// Full benchmark setup. Omitted keys and sections take their defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub mode: Mode,
    /// Samples in the accuracy evaluation; 0 skips it.
    pub num_images: usize,
    pub rng_seed: u64,
    pub model: ModelSection,
    pub platforms: PlatformSection,
    /// A missing section means default agent settings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentConfig>,
    pub quant: QuantSection,
    pub output: OutputSection,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FpgaAgent,
            num_images: 10_000,
            rng_seed: 0,
            model: ModelSection::default(),
            platforms: PlatformSection::default(),
            agent: Some(AgentConfig::default()),
            quant: QuantSection::default(),
            output: OutputSection::default(),
            base_dir: PathBuf::new(),
        }
    }
}

/// Dotted key of the TOML entry covering byte `offset`.
fn key_at(text: &str, offset: usize) -> String {
    let upto = &text[..offset.min(text.len())];
    let line_start = upto.rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[line_start..]
        .find('\n')
        .map_or(text.len(), |i| line_start + i);
    let line = text[line_start..line_end].trim();
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let key = line.split_once('=').map(|(k, _)| k.trim().to_string());
    match (table, key) {
        (Some(t), Some(k)) => format!("{t}.{k}"),
        (None, Some(k)) => k,
        (Some(t), None) => t,
        (None, None) => "<document>".into(),
    }
}

impl BenchmarkConfig {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("benchmark config serializes")
    }

    /// Parses and validates; `path` only labels errors.
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: BenchmarkConfig = toml::from_str(text).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            field: e
                .span()
                .map_or_else(|| "<document>".into(), |s| key_at(text, s.start)),
            reason: e.message().trim().to_string(),
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            field: "<file>".into(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self, path: &Path) -> Result<(), ConfigError> {
        let bad = |field: &str, reason: &str| {
            Err(ConfigError {
                path: path.to_path_buf(),
                field: field.into(),
                reason: reason.into(),
            })
        };
        let m = &self.model;
        if m.path.is_none() {
            if m.num_blocks == 0 {
                return bad("model.num_blocks", "must be at least 1");
            }
            if m.base_channels == 0 {
                return bad("model.base_channels", "must be at least 1");
            }
            if m.input_shape.contains(&0) {
                return bad("model.input_shape", "every dimension must be positive");
            }
            if m.input_shape[0] != 1 {
                return bad("model.input_shape", "batch must be 1; costs are per image");
            }
            if m.num_classes == 0 {
                return bad("model.num_classes", "must be at least 1");
            }
        }
        if self.platforms.source.trim().is_empty() {
            return bad("platforms.source", "must name a builtin or a file");
        }
        let q = &self.quant;
        if q.calibration_samples == 0 {
            return bad("quant.calibration_samples", "must be at least 1");
        }
        if q.train_samples == 0 {
            return bad("quant.train_samples", "must be at least 1");
        }
        if !(q.class_spread >= 0.0 && q.class_spread.is_finite()) {
            return bad("quant.class_spread", "must be finite and non-negative");
        }
        if !(q.accuracy_threshold_points >= 0.0 && q.accuracy_threshold_points.is_finite()) {
            return bad(
                "quant.accuracy_threshold_points",
                "must be finite and non-negative",
            );
        }
        if !(q.scale_epsilon > 0.0 && q.scale_epsilon.is_finite()) {
            return bad("quant.scale_epsilon", "must be finite and positive");
        }
        match &self.agent {
            Some(agent) => agent.validate().or_else(|e| match e {
                AgentError::Invalid { field, reason } => bad(&format!("agent.{field}"), &reason),
                other => bad("agent", &other.to_string()),
            }),
            None if self.mode == Mode::FpgaAgent => {
                bad("agent", "fpga-agent mode needs an [agent] section")
            }
            None => Ok(()),
        }
    }

    /// Overrides the run seed and the agent's seed together.
    pub fn set_seed(&mut self, seed: u64) {
        self.rng_seed = seed;
        if let Some(agent) = &mut self.agent {
            agent.rng_seed = seed;
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn build_model(&self) -> Result<ModelGraph, Error> {
        let m = &self.model;
        match &m.path {
            Some(p) => ModelGraph::load(self.resolve(p)),
            None => Ok(build_resnet_like_with_classes(
                m.num_blocks,
                m.base_channels,
                TensorShape::from(m.input_shape),
                m.num_classes,
            )),
        }
    }

    pub fn load_platforms(&self) -> Result<PlatformSet, Error> {
        let source = self.platforms.source.trim();
        match source.strip_prefix(BUILTIN_PREFIX) {
            Some(name) => PlatformSet::builtin(name).ok_or_else(|| {
                ConfigError {
                    path: self.base_dir.clone(),
                    field: "platforms.source".into(),
                    reason: format!(
                        "no builtin platform named '{name}' (expected paper_calibrated or kv260)"
                    ),
                }
                .into()
            }),
            None => PlatformSet::load(self.resolve(Path::new(source))),
        }
    }

    /// Energy weight shared by the agent, heuristic and oracle objectives.
    pub fn energy_weight(&self) -> f64 {
        self.agent.as_ref().map_or(0.0, |a| a.reward_energy_weight)
    }
}
