//! Probability targets and per-minute windowing.
//!
//! Stage labels become a per-second event probability: 0 on normal samples,
//! 1 on faulty samples, and a linear ramp across each transient segment.
//! Episodes are then cut into non-overlapping 60-second windows, each
//! carrying a classification label and a regression target taken at the
//! window's last second.

use thiserror::Error;

use crate::model::{Episode, Stage, Violation, Window, WINDOW_LEN, validate_episode};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("invalid episode: {}", format_violations(.0))]
    InvalidEpisode(Vec<Violation>),
    #[error("episode has {len} samples, need at least {window}")]
    EpisodeTooShort { len: usize, window: usize },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Per-sample event probability aligned to an episode's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSeries {
    pub values: Vec<f64>,
}

/// Segmentation parameters. The stride defaults to the window length,
/// giving non-overlapping per-minute windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowParams {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams { length: WINDOW_LEN, stride: WINDOW_LEN }
    }
}

/// Map stages to probabilities: normal 0, faulty 1, and for a transient
/// segment of length L the i-th transient sample (1-based) gets i/(L+1).
/// A transient segment at the episode end is interpolated as if a faulty
/// sample followed immediately.
pub fn interpolate_probabilities(episode: &Episode) -> Result<ProbSeries, LabelError> {
    let violations = validate_episode(episode);
    if !violations.is_empty() {
        return Err(LabelError::InvalidEpisode(violations));
    }
    let n = episode.len();
    let mut values = vec![0.0; n];
    let mut i = 0;
    while i < n {
        match episode.samples[i].stage {
            Stage::Normal => {
                values[i] = 0.0;
                i += 1;
            }
            Stage::Faulty(_) => {
                values[i] = 1.0;
                i += 1;
            }
            Stage::Transient(_) => {
                let start = i;
                while i < n && matches!(episode.samples[i].stage, Stage::Transient(_)) {
                    i += 1;
                }
                let len = i - start;
                for (k, v) in values[start..i].iter_mut().enumerate() {
                    *v = (k + 1) as f64 / (len + 1) as f64;
                }
            }
        }
    }
    Ok(ProbSeries { values })
}

/// Targets for one window given its samples and probability slice: the
/// regression target is the probability at the window's last second, and
/// the class label is whether that second is in a transient or faulty stage.
pub fn assign_targets(samples: &[crate::model::Sample], probs: &[f64]) -> (bool, f64) {
    debug_assert_eq!(samples.len(), probs.len());
    let last = samples.len() - 1;
    (samples[last].stage.is_event(), probs[last])
}

/// Cut an episode into windows of `params.length` seconds every
/// `params.stride` seconds. A trailing remainder shorter than the window
/// length is discarded.
pub fn segment(episode: &Episode, params: WindowParams) -> Result<Vec<Window>, LabelError> {
    let probs = interpolate_probabilities(episode)?;
    let n = episode.len();
    if n < params.length {
        return Err(LabelError::EpisodeTooShort { len: n, window: params.length });
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start + params.length <= n {
        let end = start + params.length;
        let samples = &episode.samples[start..end];
        let (class_label, prob_target) = assign_targets(samples, &probs.values[start..end]);
        windows.push(Window {
            episode_id: episode.id.clone(),
            start: episode.samples[start].timestamp,
            values: samples.iter().map(|s| s.channels.clone()).collect(),
            class_label,
            prob_target,
        });
        start += params.stride;
    }
    Ok(windows)
}
