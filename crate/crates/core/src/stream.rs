//! Single-pass streaming prediction: pipe an episode CSV through a saved
//! model, scoring one window per completed minute with bounded memory (one
//! window buffer).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::forest::{self, ForestModel};
use crate::ingest::ColumnMapping;
use crate::model::WINDOW_LEN;
use crate::tcn::{self, TcnModel};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
    #[error("model expects channels {expected:?}; csv resolves {got} of them")]
    LengthMismatch { expected: Vec<String>, got: usize },
    #[error("episode has {len} rows, need at least {WINDOW_LEN}")]
    EpisodeTooShort { len: usize },
    #[error("channel `{0}` has no observed value in the first window")]
    MissingData(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Either model family behind one scoring interface.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Forest(ForestModel),
    Tcn(TcnModel),
}

impl LoadedModel {
    /// Channel names the model consumes, in order.
    pub fn channel_names(&self) -> &[String] {
        match self {
            LoadedModel::Forest(m) => &m.feature_mask.kept,
            LoadedModel::Tcn(m) => &m.standardizer.channel_names,
        }
    }

    /// Score one raw window of `WINDOW_LEN` rows.
    pub fn score(&self, values: &[Vec<f64>]) -> Result<f64, StreamError> {
        match self {
            LoadedModel::Forest(m) => m
                .predict_window(values)
                .map_err(|e| StreamError::CorruptModelFile(e.to_string())),
            LoadedModel::Tcn(m) => m
                .score_window(values)
                .map_err(|e| StreamError::CorruptModelFile(e.to_string())),
        }
    }
}

/// Sniff the `format` field and load whichever model kind the file holds.
pub fn load_any_model(path: &Path) -> Result<LoadedModel, StreamError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| StreamError::CorruptModelFile(e.to_string()))?;
    match value.get("format").and_then(|v| v.as_str()) {
        Some(forest::FOREST_FORMAT) => forest::load_model(path)
            .map(LoadedModel::Forest)
            .map_err(|e| StreamError::CorruptModelFile(e.to_string())),
        Some(tcn::TCN_FORMAT) => tcn::load_model(path)
            .map(LoadedModel::Tcn)
            .map_err(|e| StreamError::CorruptModelFile(e.to_string())),
        other => Err(StreamError::CorruptModelFile(format!("format {other:?}"))),
    }
}

/// Stream an episode CSV through a saved model, emitting one
/// `minute,score` row per completed 60-sample window. Missing sensor cells
/// forward-fill from the last observed value; a leading gap backfills
/// within the first window only.
pub fn predict_stream(
    model_path: &Path,
    input: &Path,
    out: &Path,
    mapping: &ColumnMapping,
) -> Result<usize, StreamError> {
    let model = load_any_model(model_path)?;
    let needed = model.channel_names().to_vec();

    let file = File::open(input)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    // resolve each model channel to a csv column before any row is emitted
    let mut column_of = Vec::with_capacity(needed.len());
    for name in &needed {
        let header = mapping
            .channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
            .unwrap_or(name.as_str());
        match headers.iter().position(|h| h == header) {
            Some(idx) => column_of.push(idx),
            None => {
                return Err(StreamError::LengthMismatch {
                    expected: needed.clone(),
                    got: column_of.len(),
                })
            }
        }
    }

    let mut writer = BufWriter::new(File::create(out)?);
    writeln!(writer, "minute,score")?;

    let channels = needed.len();
    let mut last_seen: Vec<Option<f64>> = vec![None; channels];
    let mut buffer: Vec<Vec<f64>> = Vec::with_capacity(WINDOW_LEN);
    let mut total_rows = 0usize;
    let mut minutes = 0usize;
    for record in reader.records() {
        let record = record?;
        total_rows += 1;
        let mut row = Vec::with_capacity(channels);
        for (c, &idx) in column_of.iter().enumerate() {
            let parsed = record
                .get(idx)
                .and_then(|cell| cell.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite());
            let value = match parsed {
                Some(v) => {
                    last_seen[c] = Some(v);
                    v
                }
                None => last_seen[c].unwrap_or(f64::NAN),
            };
            row.push(value);
        }
        buffer.push(row);
        if buffer.len() == WINDOW_LEN {
            backfill_leading(&mut buffer, &needed)?;
            let score = model.score(&buffer)?;
            writeln!(writer, "{minutes},{score:.6}")?;
            minutes += 1;
            buffer.clear();
        }
    }
    if total_rows < WINDOW_LEN {
        return Err(StreamError::EpisodeTooShort { len: total_rows });
    }
    writer.flush()?;
    Ok(minutes)
}

fn backfill_leading(buffer: &mut [Vec<f64>], names: &[String]) -> Result<(), StreamError> {
    let channels = names.len();
    for c in 0..channels {
        if !buffer[0][c].is_nan() {
            continue;
        }
        let first = buffer.iter().map(|r| r[c]).find(|v| !v.is_nan());
        match first {
            Some(v) => {
                for row in buffer.iter_mut() {
                    if row[c].is_nan() {
                        row[c] = v;
                    } else {
                        break;
                    }
                }
            }
            None => return Err(StreamError::MissingData(names[c].clone())),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{fit_forest, save_model, ForestParams, Task};
    use crate::ingest::{write_episode_csv, FeatureMask};
    use crate::label::{segment, WindowParams};
    use crate::model::EventType;
    use crate::synth::{generate_episode, SynthSpec};

    fn trained_model_on_synth(dir: &Path) -> (std::path::PathBuf, SynthSpec) {
        let mut spec = SynthSpec::for_event(EventType::SpuriousDhsvClosure);
        spec.seed = 77;
        let episode = generate_episode(&spec, "train-ep").unwrap();
        let windows = segment(&episode, WindowParams::default()).unwrap();
        let mask = FeatureMask {
            kept: episode.channel_names.clone(),
            dropped: vec![],
        };
        let vectors: Vec<Vec<f64>> = windows
            .iter()
            .map(|w| crate::features::extract_stats(&w.values))
            .collect();
        let normalizer = crate::features::fit_normalizer(&vectors).unwrap();
        let x: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| crate::features::apply_normalizer(&normalizer, v).unwrap())
            .collect();
        let y: Vec<f64> = windows.iter().map(|w| w.prob_target).collect();
        let params = ForestParams {
            n_trees: 20,
            seed: 1,
            ..ForestParams::default_for(Task::Regress)
        };
        let model = fit_forest(&x, &y, &params, normalizer, mask).unwrap();
        let path = dir.join("model.json");
        save_model(&model, &path).unwrap();
        (path, spec)
    }

    #[test]
    fn stream_emits_one_row_per_minute() {
        let dir = tempfile::tempdir().unwrap();
        let (model_path, mut spec) = trained_model_on_synth(dir.path());
        spec.seed = 78;
        spec.normal_len = 120;
        spec.transient_len = 0;
        spec.faulty_len = 60;
        let episode = generate_episode(&spec, "stream-ep").unwrap();
        let csv_path = dir.path().join("ep.csv");
        let mapping = ColumnMapping::identity(&episode.channel_names);
        write_episode_csv(&episode, &csv_path, &mapping).unwrap();
        let out = dir.path().join("trace.csv");
        let rows = predict_stream(&model_path, &csv_path, &out, &mapping).unwrap();
        assert_eq!(rows, 3);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 4); // header + 3
        assert!(text.starts_with("minute,score\n0,"));
    }

    #[test]
    fn streaming_matches_batch_scoring() {
        let dir = tempfile::tempdir().unwrap();
        let (model_path, mut spec) = trained_model_on_synth(dir.path());
        spec.seed = 79;
        let episode = generate_episode(&spec, "verify-ep").unwrap();
        let csv_path = dir.path().join("ep.csv");
        let mapping = ColumnMapping::identity(&episode.channel_names);
        write_episode_csv(&episode, &csv_path, &mapping).unwrap();
        let out = dir.path().join("trace.csv");
        predict_stream(&model_path, &csv_path, &out, &mapping).unwrap();

        let model = load_any_model(&model_path).unwrap();
        let windows = segment(&episode, WindowParams::default()).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        for (line, w) in text.lines().skip(1).zip(&windows) {
            let score: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            let batch = model.score(&w.values).unwrap();
            assert!(
                (score - batch).abs() < 5e-7,
                "stream {score} vs batch {batch}"
            );
        }
    }

    #[test]
    fn rising_probability_across_the_transient() {
        let dir = tempfile::tempdir().unwrap();
        let (model_path, mut spec) = trained_model_on_synth(dir.path());
        spec.seed = 80;
        let episode = generate_episode(&spec, "rise-ep").unwrap();
        let csv_path = dir.path().join("ep.csv");
        let mapping = ColumnMapping::identity(&episode.channel_names);
        write_episode_csv(&episode, &csv_path, &mapping).unwrap();
        let out = dir.path().join("trace.csv");
        predict_stream(&model_path, &csv_path, &out, &mapping).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let scores: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(scores.len(), 10);
        assert!(scores[..4].iter().all(|&s| s < 0.2), "normal scores {scores:?}");
        assert!(scores[8] > 0.8 && scores[9] > 0.8, "faulty scores {scores:?}");
    }

    #[test]
    fn channel_mismatch_fails_before_any_output() {
        let dir = tempfile::tempdir().unwrap();
        let (model_path, _) = trained_model_on_synth(dir.path());
        let csv_path = dir.path().join("bad.csv");
        std::fs::write(&csv_path, "timestamp,OTHER,class\n0,1.0,0\n").unwrap();
        let out = dir.path().join("trace.csv");
        let mapping = ColumnMapping::identity(&["OTHER".to_string()]);
        let err = predict_stream(&model_path, &csv_path, &out, &mapping);
        assert!(matches!(err, Err(StreamError::LengthMismatch { .. })));
        assert!(!out.exists());
    }

    #[test]
    fn short_episode_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (model_path, mut spec) = trained_model_on_synth(dir.path());
        spec.seed = 81;
        let episode = generate_episode(&spec, "short").unwrap();
        let mut truncated = episode.clone();
        truncated.samples.truncate(59);
        let csv_path = dir.path().join("short.csv");
        let mapping = ColumnMapping::identity(&episode.channel_names);
        write_episode_csv(&truncated, &csv_path, &mapping).unwrap();
        let out = dir.path().join("trace.csv");
        assert!(matches!(
            predict_stream(&model_path, &csv_path, &out, &mapping),
            Err(StreamError::EpisodeTooShort { len: 59 })
        ));
    }

    #[test]
    fn unknown_model_format_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weird.json");
        std::fs::write(&path, "{\"format\":\"something-else\"}").unwrap();
        assert!(matches!(
            load_any_model(&path),
            Err(StreamError::CorruptModelFile(_))
        ));
    }
}
