//! Plain-text configuration: a TOML file with sections mirroring the
//! experiment setup, overridable from the command line with dotted
//! `key=value` pairs. Unknown keys are rejected, not ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{FeatureSubset, ForestParams, Task};
use crate::ingest::ColumnMapping;
use crate::label::WindowParams;
use crate::model::EventType;
use crate::synth::SynthSpec;
use crate::tcn::TcnConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("bad config value: {0}")]
    BadValue(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct AppConfig {
    pub data: DataSection,
    pub window: WindowSection,
    pub split: SplitSection,
    pub forest: ForestSection,
    pub tcn: TcnSection,
    pub synth: SynthSection,
}


#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Data root with one folder per event code. The WELLEVENT_DATA_ROOT
    /// environment variable and the --root flag both override this.
    pub root: Option<PathBuf>,
    pub timestamp_column: String,
    pub class_column: String,
    /// Channel order here is the channel order everywhere downstream.
    pub channels: Vec<ChannelSpec>,
    /// Fraction of missing values above which a channel is dropped.
    pub empty_threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    pub column: String,
}

impl Default for DataSection {
    fn default() -> Self {
        let mapping = ColumnMapping::default();
        DataSection {
            root: None,
            timestamp_column: mapping.timestamp.clone(),
            class_column: mapping.class.clone(),
            channels: mapping
                .channels
                .into_iter()
                .map(|(name, column)| ChannelSpec { name, column })
                .collect(),
            empty_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSection {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        WindowSection { length: 60, stride: 60 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub rf: Vec<f64>,
    pub tcn: Vec<f64>,
    pub seed: u64,
    pub grouped: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { rf: vec![0.8, 0.2], tcn: vec![0.7, 0.1, 0.2], seed: 0, grouped: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSection {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// "auto" picks sqrt(F) for classification and F/3 for regression;
    /// "sqrt", "third" and "all" force a rule.
    pub features_per_split: String,
    pub seed: u64,
}

impl Default for ForestSection {
    fn default() -> Self {
        ForestSection {
            n_trees: 175,
            max_depth: 10,
            min_leaf: 1,
            features_per_split: "auto".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcnSection {
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub channels: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TcnSection {
    fn default() -> Self {
        let c = TcnConfig::default_for(Task::Classify);
        TcnSection {
            kernel_size: c.kernel_size,
            dilations: c.dilations,
            channels: c.channels,
            dropout: c.dropout,
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub master_seed: u64,
    /// Pure-normal episodes to generate alongside the event episodes.
    pub normals: usize,
    pub events: Vec<SynthEventSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthEventSection {
    pub event: u8,
    /// Episodes to generate from this recipe.
    pub count: usize,
    pub normal_len: usize,
    pub transient_len: usize,
    pub faulty_len: usize,
    pub baselines: Vec<f64>,
    pub noise_sd: Vec<f64>,
    pub fault_shift: Vec<f64>,
}

impl Default for SynthEventSection {
    fn default() -> Self {
        let spec = SynthSpec::for_event(EventType::SpuriousDhsvClosure);
        SynthEventSection {
            event: spec.event.code(),
            count: 20,
            normal_len: spec.normal_len,
            transient_len: spec.transient_len,
            faulty_len: spec.faulty_len,
            baselines: spec.baselines,
            noise_sd: spec.noise_sd,
            fault_shift: spec.fault_shift,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            master_seed: 0,
            normals: 20,
            events: vec![SynthEventSection::default()],
        }
    }
}

impl AppConfig {
    pub fn mapping(&self) -> ColumnMapping {
        ColumnMapping {
            timestamp: self.data.timestamp_column.clone(),
            class: self.data.class_column.clone(),
            channels: self
                .data
                .channels
                .iter()
                .map(|c| (c.name.clone(), c.column.clone()))
                .collect(),
        }
    }

    pub fn window_params(&self) -> WindowParams {
        WindowParams { length: self.window.length, stride: self.window.stride }
    }

    pub fn forest_params(&self, task: Task) -> Result<ForestParams, ConfigError> {
        let features_per_split = match self.forest.features_per_split.as_str() {
            "auto" => match task {
                Task::Classify => FeatureSubset::SqrtF,
                Task::Regress => FeatureSubset::ThirdF,
            },
            "sqrt" => FeatureSubset::SqrtF,
            "third" => FeatureSubset::ThirdF,
            "all" => FeatureSubset::All,
            other => {
                return Err(ConfigError::BadValue(format!(
                    "forest.features_per_split `{other}` (want auto|sqrt|third|all)"
                )))
            }
        };
        Ok(ForestParams {
            n_trees: self.forest.n_trees,
            max_depth: self.forest.max_depth,
            min_leaf: self.forest.min_leaf,
            features_per_split,
            task,
            seed: self.forest.seed,
        })
    }

    pub fn tcn_config(&self, task: Task) -> TcnConfig {
        TcnConfig {
            kernel_size: self.tcn.kernel_size,
            dilations: self.tcn.dilations.clone(),
            channels: self.tcn.channels,
            dropout: self.tcn.dropout,
            epochs: self.tcn.epochs,
            batch_size: self.tcn.batch_size,
            learning_rate: self.tcn.learning_rate,
            beta1: self.tcn.beta1,
            beta2: self.tcn.beta2,
            epsilon: self.tcn.epsilon,
            task,
            seed: self.tcn.seed,
        }
    }

    /// Expand the synth section into per-episode specs (seeds assigned by
    /// the generator) plus the normal count and master seed.
    pub fn synth_plan(&self) -> Result<(Vec<SynthSpec>, usize, u64), ConfigError> {
        let mut specs = Vec::new();
        for section in &self.synth.events {
            let event = EventType::from_code(section.event)
                .map_err(|e| ConfigError::BadValue(e.to_string()))?;
            for _ in 0..section.count {
                specs.push(SynthSpec {
                    event,
                    normal_len: section.normal_len,
                    transient_len: section.transient_len,
                    faulty_len: section.faulty_len,
                    baselines: section.baselines.clone(),
                    noise_sd: section.noise_sd.clone(),
                    fault_shift: section.fault_shift.clone(),
                    seed: 0,
                });
            }
        }
        Ok((specs, self.synth.normals, self.synth.master_seed))
    }

    /// Force every seed in the config to one value.
    pub fn override_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.forest.seed = seed;
        self.tcn.seed = seed;
        self.synth.master_seed = seed;
    }
}

fn parse_toml_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.is_empty() || path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let mut current = table;
    for part in &path[..path.len() - 1] {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    }
    current.insert(path[path.len() - 1].to_string(), parse_toml_value(raw.trim()));
    Ok(())
}

/// Load the configuration: defaults, then the file (if any), then CLI
/// overrides. Unknown keys anywhere fail the load.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<AppConfig, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    table
        .try_into::<AppConfig>()
        .map_err(|e| ConfigError::Parse(e.to_string()))
}
