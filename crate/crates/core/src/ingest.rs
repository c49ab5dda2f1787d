//! CSV episode files: loading, meaningful-feature selection, and catalog
//! scanning over a 3W-style directory layout (one folder per event code,
//! folder 0 for normal operation).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{decode_3w_class, Episode, EventType, ModelError, Sample, Source};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: missing required column `{column}`")]
    MalformedHeader { path: String, column: String },
    #[error("{path}: no data rows")]
    EmptyFile { path: String },
    #[error("{path} row {row}: bad class value `{value}`")]
    BadClassValue { path: String, row: usize, value: String },
    #[error("{path} row {row}: {source}")]
    UnknownLabelCode { path: String, row: usize, source: ModelError },
    #[error("all channels were dropped as empty or constant")]
    NoUsableChannels,
    #[error("episodes disagree on channel names")]
    InconsistentChannels,
    #[error("data root `{0}` does not exist")]
    MissingRoot(PathBuf),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// Maps channel names to CSV column headers. Channel order here fixes the
/// channel order of loaded episodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub timestamp: String,
    pub class: String,
    /// (channel name, CSV column) pairs, in channel order.
    pub channels: Vec<(String, String)>,
}

impl Default for ColumnMapping {
    /// The 3W column names for the five features most subsets carry.
    fn default() -> Self {
        ColumnMapping {
            timestamp: "timestamp".into(),
            class: "class".into(),
            channels: vec![
                ("P1".into(), "P-PDG".into()),
                ("T1".into(), "T-TPT".into()),
                ("P2".into(), "P-TPT".into()),
                ("P3".into(), "P-MON-CKP".into()),
                ("T2".into(), "T-JUS-CKP".into()),
            ],
        }
    }
}

impl ColumnMapping {
    /// Mapping whose CSV columns are simply the channel names. Used when
    /// writing or reading our own synthetic CSV files is not required to
    /// follow the 3W headers.
    pub fn identity(names: &[String]) -> Self {
        ColumnMapping {
            timestamp: "timestamp".into(),
            class: "class".into(),
            channels: names.iter().map(|n| (n.clone(), n.clone())).collect(),
        }
    }
}

/// Why a channel was dropped by feature selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// More than the allowed fraction of values were missing.
    Empty,
    /// All observed values were identical.
    Constant,
}

/// Result of meaningful-feature selection over a pool of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub kept: Vec<String>,
    pub dropped: Vec<(String, DropReason)>,
}

/// One discovered episode file.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub path: PathBuf,
    pub event: Option<EventType>,
    pub source: Source,
    pub sample_count: usize,
}

/// Inventory of a data root, sorted by path. Problems encountered during
/// the scan are recorded as warnings rather than aborting it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
    pub warnings: Vec<String>,
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    if let Ok(v) = raw.parse::<f64>() {
        if v.fract() == 0.0 {
            return Some(v as i64);
        }
    }
    // 3W real files carry wall-clock timestamps
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

fn parse_class(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    raw.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64)
}

/// Infer the episode source from the 3W file-naming convention.
pub fn infer_source(path: &Path) -> Source {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if name.starts_with("SIMULATED") {
        Source::Simulated
    } else if name.starts_with("SYNTH") || name.starts_with("synth") {
        Source::Synthetic
    } else {
        Source::Real
    }
}

/// Load one episode CSV. Sensor cells that fail to parse become
/// masked-missing values; timestamps are rebased to seconds since episode
/// start; the class column is decoded into stages.
pub fn load_episode_csv(path: &Path, mapping: &ColumnMapping) -> Result<Episode, IngestError> {
    let pstr = path.display().to_string();
    let file = File::open(path).map_err(|e| IngestError::Io { path: pstr.clone(), source: e })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv { path: pstr.clone(), source: e })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ts_idx = col(&mapping.timestamp).ok_or_else(|| IngestError::MalformedHeader {
        path: pstr.clone(),
        column: mapping.timestamp.clone(),
    })?;
    let class_idx = col(&mapping.class).ok_or_else(|| IngestError::MalformedHeader {
        path: pstr.clone(),
        column: mapping.class.clone(),
    })?;
    let mut channel_names = Vec::new();
    let mut channel_idx = Vec::new();
    for (name, column) in &mapping.channels {
        let idx = col(column).ok_or_else(|| IngestError::MalformedHeader {
            path: pstr.clone(),
            column: column.clone(),
        })?;
        channel_names.push(name.clone());
        channel_idx.push(idx);
    }
    if channel_idx.is_empty() {
        return Err(IngestError::MalformedHeader { path: pstr, column: "<sensor>".into() });
    }

    let mut samples: Vec<Sample> = Vec::new();
    let mut first_ts: Option<i64> = None;
    let mut event: Option<EventType> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record.map_err(|e| IngestError::Csv { path: pstr.clone(), source: e })?;
        let raw_ts = record.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| IngestError::BadClassValue {
            path: pstr.clone(),
            row,
            value: format!("timestamp `{raw_ts}`"),
        })?;
        let ts = match first_ts {
            Some(t0) => ts - t0,
            None => {
                first_ts = Some(ts);
                0
            }
        };
        let raw_class = record.get(class_idx).unwrap_or("");
        let code = parse_class(raw_class).ok_or_else(|| IngestError::BadClassValue {
            path: pstr.clone(),
            row,
            value: raw_class.to_string(),
        })?;
        let stage = decode_3w_class(code)
            .map_err(|e| IngestError::UnknownLabelCode { path: pstr.clone(), row, source: e })?;
        if event.is_none() {
            event = stage.event();
        }
        let channels: Vec<f64> = channel_idx
            .iter()
            .map(|&idx| {
                record
                    .get(idx)
                    .and_then(|c| c.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .unwrap_or(f64::NAN)
            })
            .collect();
        samples.push(Sample::new(ts, channels, stage));
    }
    if samples.is_empty() {
        return Err(IngestError::EmptyFile { path: pstr });
    }
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("episode")
        .to_string();
    Ok(Episode {
        id,
        source: infer_source(path),
        event,
        samples,
        channel_names,
    })
}

/// Write an episode in the same CSV schema `load_episode_csv` reads.
/// Values use the shortest round-trip float representation; masked-missing
/// cells are left empty.
pub fn write_episode_csv(
    episode: &Episode,
    path: &Path,
    mapping: &ColumnMapping,
) -> Result<(), IngestError> {
    let pstr = path.display().to_string();
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| IngestError::Csv { path: pstr.clone(), source: e })?;
    let mut header = vec![mapping.timestamp.clone()];
    for name in &episode.channel_names {
        let column = mapping
            .channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| name.clone());
        header.push(column);
    }
    header.push(mapping.class.clone());
    writer
        .write_record(&header)
        .map_err(|e| IngestError::Csv { path: pstr.clone(), source: e })?;
    for s in &episode.samples {
        let mut record = vec![s.timestamp.to_string()];
        for (c, &v) in s.channels.iter().enumerate() {
            record.push(if s.missing[c] { String::new() } else { format!("{v}") });
        }
        record.push(s.stage.to_3w_class().to_string());
        writer
            .write_record(&record)
            .map_err(|e| IngestError::Csv { path: pstr.clone(), source: e })?;
    }
    writer
        .flush()
        .map_err(|e| IngestError::Io { path: pstr, source: e })?;
    Ok(())
}

/// Select meaningful channels over a pool of episodes: a channel is dropped
/// as Empty when more than `empty_threshold` of its pooled values are
/// missing, and as Constant when its observed values have zero range.
/// Kept channels preserve input order.
pub fn select_features(
    episodes: &[Episode],
    empty_threshold: f64,
) -> Result<FeatureMask, IngestError> {
    assert!(!episodes.is_empty(), "select_features needs at least one episode");
    let names = episodes[0].channel_names.clone();
    for ep in episodes {
        if ep.channel_names != names {
            return Err(IngestError::InconsistentChannels);
        }
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let mut total = 0usize;
        let mut missing = 0usize;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for ep in episodes {
            for s in &ep.samples {
                total += 1;
                if s.missing[c] {
                    missing += 1;
                } else {
                    min = min.min(s.channels[c]);
                    max = max.max(s.channels[c]);
                }
            }
        }
        if total == 0 || missing as f64 > empty_threshold * total as f64 {
            dropped.push((name.clone(), DropReason::Empty));
        } else if min == max {
            dropped.push((name.clone(), DropReason::Constant));
        } else {
            kept.push(name.clone());
        }
    }
    if kept.is_empty() {
        return Err(IngestError::NoUsableChannels);
    }
    Ok(FeatureMask { kept, dropped })
}

fn count_data_rows(path: &Path) -> std::io::Result<usize> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i > 0 && !line.trim().is_empty() {
            rows += 1;
        }
    }
    Ok(rows)
}

/// Scan a 3W-style data root: one folder per event code. Unreadable files
/// and unrecognized folders are skipped with a recorded warning; the scan
/// itself never aborts once the root exists.
pub fn build_catalog(root: &Path) -> Result<Catalog, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::MissingRoot(root.to_path_buf()));
    }
    let mut catalog = Catalog::default();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| IngestError::Io { path: root.display().to_string(), source: e })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let folder = dir.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        let event = match folder.parse::<u8>() {
            Ok(0) => None,
            Ok(code) => match EventType::from_code(code) {
                Ok(e) => Some(e),
                Err(_) => {
                    let w = format!("skipping folder `{folder}`: not an event code");
                    log::warn!("{w}");
                    catalog.warnings.push(w);
                    continue;
                }
            },
            Err(_) => {
                let w = format!("skipping folder `{folder}`: not an event code");
                log::warn!("{w}");
                catalog.warnings.push(w);
                continue;
            }
        };
        let mut files: Vec<PathBuf> = match std::fs::read_dir(&dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|x| x == "csv").unwrap_or(false))
                .collect(),
            Err(e) => {
                let w = format!("skipping folder `{folder}`: {e}");
                log::warn!("{w}");
                catalog.warnings.push(w);
                continue;
            }
        };
        files.sort();
        for path in files {
            match count_data_rows(&path) {
                Ok(0) => {
                    let w = format!("skipping `{}`: no data rows", path.display());
                    log::warn!("{w}");
                    catalog.warnings.push(w);
                }
                Ok(sample_count) => catalog.entries.push(CatalogEntry {
                    source: infer_source(&path),
                    path,
                    event,
                    sample_count,
                }),
                Err(e) => {
                    let w = format!("skipping `{}`: {e}", path.display());
                    log::warn!("{w}");
                    catalog.warnings.push(w);
                }
            }
        }
    }
    catalog.entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(catalog)
}
