//! Core domain types shared by the whole pipeline: undesired-event taxonomy,
//! operating stages, labeled samples, episodes and per-minute windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of seconds in one prediction window.
pub const WINDOW_LEN: usize = 60;

/// The eight undesired-event classes of the 3W taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventType {
    AbruptBswIncrease = 1,
    SpuriousDhsvClosure = 2,
    SevereSlugging = 3,
    FlowInstability = 4,
    RapidProductivityLoss = 5,
    QuickChokeRestriction = 6,
    ChokeScaling = 7,
    HydrateInLine = 8,
}

impl EventType {
    pub const ALL: [EventType; 8] = [
        EventType::AbruptBswIncrease,
        EventType::SpuriousDhsvClosure,
        EventType::SevereSlugging,
        EventType::FlowInstability,
        EventType::RapidProductivityLoss,
        EventType::QuickChokeRestriction,
        EventType::ChokeScaling,
        EventType::HydrateInLine,
    ];

    /// Numeric event code, 1..=8.
    pub fn code(self) -> u8 {
        self as u8
    }

    /// Human-readable event name.
    pub fn name(self) -> &'static str {
        match self {
            EventType::AbruptBswIncrease => "Abrupt basic sediment water increase",
            EventType::SpuriousDhsvClosure => "Spurious downhole safety valve closure",
            EventType::SevereSlugging => "Severe slugging",
            EventType::FlowInstability => "Flow instability",
            EventType::RapidProductivityLoss => "Rapid productivity loss",
            EventType::QuickChokeRestriction => "Quick production choke restriction",
            EventType::ChokeScaling => "Scaling in production choke",
            EventType::HydrateInLine => "Hydrate in production line",
        }
    }

    pub fn from_code(code: u8) -> Result<EventType, ModelError> {
        EventType::ALL
            .iter()
            .copied()
            .find(|e| e.code() == code)
            .ok_or(ModelError::UnknownLabelCode(code as i64))
    }
}

impl std::fmt::Display for EventType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Event{}", self.code())
    }
}

/// Operating stage of a single sample. Transient and faulty stages always
/// refer to a concrete event; normal operation never does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Normal,
    Transient(EventType),
    Faulty(EventType),
}

impl Stage {
    /// Rank used to enforce the Normal -> Transient -> Faulty progression.
    fn rank(self) -> u8 {
        match self {
            Stage::Normal => 0,
            Stage::Transient(_) => 1,
            Stage::Faulty(_) => 2,
        }
    }

    pub fn event(self) -> Option<EventType> {
        match self {
            Stage::Normal => None,
            Stage::Transient(e) | Stage::Faulty(e) => Some(e),
        }
    }

    pub fn is_event(self) -> bool {
        !matches!(self, Stage::Normal)
    }

    /// Integer class code in the 3W label convention.
    pub fn to_3w_class(self) -> i64 {
        match self {
            Stage::Normal => 0,
            Stage::Faulty(e) => e.code() as i64,
            Stage::Transient(e) => 100 + e.code() as i64,
        }
    }
}

/// Where an episode came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Real,
    Simulated,
    Synthetic,
}

/// One per-second reading: sensor values plus the expert stage label.
/// Missing readings are flagged in `missing`, never silently zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Seconds since episode start.
    pub timestamp: i64,
    pub channels: Vec<f64>,
    pub stage: Stage,
    pub missing: Vec<bool>,
}

impl Sample {
    pub fn new(timestamp: i64, channels: Vec<f64>, stage: Stage) -> Sample {
        let missing = channels.iter().map(|v| v.is_nan()).collect();
        Sample { timestamp, channels, stage, missing }
    }
}

/// One labeled multivariate time series: a single 3W file or synthetic run.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub source: Source,
    /// Event this episode exhibits; absent for pure-normal episodes.
    pub event: Option<EventType>,
    pub samples: Vec<Sample>,
    pub channel_names: Vec<String>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channel_names.len()
    }

    /// Index of a channel by name.
    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }

    /// New episode containing only the named channels, in the given order.
    /// Unknown names are skipped.
    pub fn select_channels(&self, names: &[String]) -> Episode {
        let indices: Vec<usize> =
            names.iter().filter_map(|n| self.channel_index(n)).collect();
        let channel_names = indices
            .iter()
            .map(|&i| self.channel_names[i].clone())
            .collect();
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                timestamp: s.timestamp,
                channels: indices.iter().map(|&i| s.channels[i]).collect(),
                stage: s.stage,
                missing: indices.iter().map(|&i| s.missing[i]).collect(),
            })
            .collect();
        Episode {
            id: self.id.clone(),
            source: self.source,
            event: self.event,
            samples,
            channel_names,
        }
    }

    /// Fill missing readings per channel: forward-fill from the last observed
    /// value, then backward-fill any leading gap. Channels with no observed
    /// value at all stay missing.
    pub fn fill_missing(&self) -> Episode {
        let mut out = self.clone();
        let n = out.samples.len();
        for c in 0..self.channel_count() {
            let mut last: Option<f64> = None;
            for i in 0..n {
                if out.samples[i].missing[c] {
                    if let Some(v) = last {
                        out.samples[i].channels[c] = v;
                        out.samples[i].missing[c] = false;
                    }
                } else {
                    last = Some(out.samples[i].channels[c]);
                }
            }
            // leading gap: backward-fill from the first observation
            let first_seen = (0..n).find(|&i| !out.samples[i].missing[c]);
            if let Some(f) = first_seen {
                let v = out.samples[f].channels[c];
                for i in 0..f {
                    out.samples[i].channels[c] = v;
                    out.samples[i].missing[c] = false;
                }
            }
        }
        out
    }
}

/// A 60-second slice of an episode with its training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub episode_id: String,
    /// Second at which the window starts within its episode.
    pub start: i64,
    /// `WINDOW_LEN` rows of F channel values each.
    pub values: Vec<Vec<f64>>,
    /// True when the window's last second is in a transient or faulty stage.
    pub class_label: bool,
    /// Event probability at the window's last second, in [0, 1].
    pub prob_target: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown 3W label code {0}")]
    UnknownLabelCode(i64),
}

/// Decode a 3W integer class code: 0 is normal, 1..=8 faulty, 101..=108
/// transient for the corresponding event.
pub fn decode_3w_class(code: i64) -> Result<Stage, ModelError> {
    match code {
        0 => Ok(Stage::Normal),
        1..=8 => Ok(Stage::Faulty(EventType::from_code(code as u8)?)),
        101..=108 => Ok(Stage::Transient(EventType::from_code((code - 100) as u8)?)),
        other => Err(ModelError::UnknownLabelCode(other)),
    }
}

/// One structural problem found in an episode, with the sample index where
/// it was detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Timestamp at `index` does not increase by exactly one second.
    NonMonotonicTime { index: usize },
    /// Stage at `index` moves backwards in the Normal -> Transient -> Faulty order.
    StageRegression { index: usize },
    /// Sample at `index` has a different channel count than the episode.
    ChannelCountMismatch { index: usize },
    /// Transient/faulty stage at `index` names a different event than the
    /// episode's first event stage.
    EventMismatch { index: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonMonotonicTime { index } => write!(f, "NonMonotonicTime@{index}"),
            Violation::StageRegression { index } => write!(f, "StageRegression@{index}"),
            Violation::ChannelCountMismatch { index } => {
                write!(f, "ChannelCountMismatch@{index}")
            }
            Violation::EventMismatch { index } => write!(f, "EventMismatch@{index}"),
        }
    }
}

/// Check every episode invariant and return one record per breach. Never
/// fails; a well-formed episode yields an empty list.
pub fn validate_episode(episode: &Episode) -> Vec<Violation> {
    let mut violations = Vec::new();
    let expected_channels = episode.channel_count();
    let mut first_event: Option<EventType> = episode.event;
    for (i, sample) in episode.samples.iter().enumerate() {
        if sample.channels.len() != expected_channels
            || sample.missing.len() != expected_channels
        {
            violations.push(Violation::ChannelCountMismatch { index: i });
        }
        if i > 0 {
            let prev = &episode.samples[i - 1];
            if sample.timestamp != prev.timestamp + 1 {
                violations.push(Violation::NonMonotonicTime { index: i });
            }
            if sample.stage.rank() < prev.stage.rank() {
                violations.push(Violation::StageRegression { index: i });
            }
        }
        if let Some(e) = sample.stage.event() {
            match first_event {
                None => first_event = Some(e),
                Some(expected) if e != expected => {
                    violations.push(Violation::EventMismatch { index: i })
                }
                _ => {}
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_episode(stages: &[Stage]) -> Episode {
        let samples = stages
            .iter()
            .enumerate()
            .map(|(i, &stage)| Sample::new(i as i64, vec![1.0, 2.0], stage))
            .collect();
        Episode {
            id: "test".into(),
            source: Source::Synthetic,
            event: None,
            samples,
            channel_names: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn decode_normal() {
        assert_eq!(decode_3w_class(0), Ok(Stage::Normal));
    }

    #[test]
    fn decode_faulty() {
        assert_eq!(
            decode_3w_class(2),
            Ok(Stage::Faulty(EventType::SpuriousDhsvClosure))
        );
    }

    #[test]
    fn decode_transient() {
        assert_eq!(
            decode_3w_class(105),
            Ok(Stage::Transient(EventType::RapidProductivityLoss))
        );
    }

    #[test]
    fn decode_rejects_unknown_codes() {
        for code in [-1, 9, 42, 100, 109, 200] {
            assert_eq!(decode_3w_class(code), Err(ModelError::UnknownLabelCode(code)));
        }
    }

    #[test]
    fn decode_is_injective_over_valid_codes() {
        let valid: Vec<i64> = std::iter::once(0)
            .chain(1..=8)
            .chain(101..=108)
            .collect();
        let mut seen = Vec::new();
        for code in valid {
            let stage = decode_3w_class(code).unwrap();
            assert!(!seen.contains(&stage), "code {code} duplicates {stage:?}");
            assert_eq!(stage.to_3w_class(), code);
            seen.push(stage);
        }
    }

    #[test]
    fn event_names_match_taxonomy() {
        assert_eq!(
            EventType::AbruptBswIncrease.name(),
            "Abrupt basic sediment water increase"
        );
        assert_eq!(EventType::HydrateInLine.name(), "Hydrate in production line");
        for e in EventType::ALL {
            assert_eq!(EventType::from_code(e.code()).unwrap(), e);
        }
    }

    #[test]
    fn validate_accepts_well_formed_episode() {
        let ev = EventType::SpuriousDhsvClosure;
        let ep = flat_episode(&[
            Stage::Normal,
            Stage::Normal,
            Stage::Transient(ev),
            Stage::Faulty(ev),
        ]);
        assert!(validate_episode(&ep).is_empty());
    }

    #[test]
    fn validate_flags_stage_regression() {
        let ev = EventType::SevereSlugging;
        let ep = flat_episode(&[Stage::Faulty(ev), Stage::Normal]);
        assert_eq!(
            validate_episode(&ep),
            vec![Violation::StageRegression { index: 1 }]
        );
    }

    #[test]
    fn validate_flags_duplicated_timestamp() {
        let mut ep = flat_episode(&[Stage::Normal, Stage::Normal, Stage::Normal]);
        ep.samples[2].timestamp = ep.samples[1].timestamp;
        assert_eq!(
            validate_episode(&ep),
            vec![Violation::NonMonotonicTime { index: 2 }]
        );
    }

    #[test]
    fn validate_flags_time_gap() {
        let mut ep = flat_episode(&[Stage::Normal, Stage::Normal]);
        ep.samples[1].timestamp = 5;
        assert_eq!(
            validate_episode(&ep),
            vec![Violation::NonMonotonicTime { index: 1 }]
        );
    }

    #[test]
    fn validate_flags_channel_count_mismatch() {
        let mut ep = flat_episode(&[Stage::Normal, Stage::Normal]);
        ep.samples[1].channels.push(3.0);
        assert_eq!(
            validate_episode(&ep),
            vec![Violation::ChannelCountMismatch { index: 1 }]
        );
    }

    #[test]
    fn validate_flags_mixed_events() {
        let ep = flat_episode(&[
            Stage::Normal,
            Stage::Transient(EventType::SevereSlugging),
            Stage::Faulty(EventType::FlowInstability),
        ]);
        assert_eq!(
            validate_episode(&ep),
            vec![Violation::EventMismatch { index: 2 }]
        );
    }

    #[test]
    fn fill_missing_forward_then_backward() {
        let mut ep = flat_episode(&[Stage::Normal; 5]);
        // channel 0: leading gap then observations; channel 1: interior gap
        for (i, vals) in [
            (0usize, [f64::NAN, 1.0]),
            (1, [f64::NAN, f64::NAN]),
            (2, [7.0, 3.0]),
            (3, [f64::NAN, f64::NAN]),
            (4, [9.0, 4.0]),
        ] {
            ep.samples[i] = Sample::new(i as i64, vals.to_vec(), Stage::Normal);
        }
        let filled = ep.fill_missing();
        let col = |c: usize| -> Vec<f64> {
            filled.samples.iter().map(|s| s.channels[c]).collect()
        };
        assert_eq!(col(0), vec![7.0, 7.0, 7.0, 7.0, 9.0]);
        assert_eq!(col(1), vec![1.0, 1.0, 3.0, 3.0, 4.0]);
        assert!(filled.samples.iter().all(|s| s.missing.iter().all(|&m| !m)));
    }

    #[test]
    fn fill_missing_keeps_empty_channel_missing() {
        let mut ep = flat_episode(&[Stage::Normal; 3]);
        for s in &mut ep.samples {
            s.channels[1] = f64::NAN;
            s.missing[1] = true;
        }
        let filled = ep.fill_missing();
        assert!(filled.samples.iter().all(|s| s.missing[1]));
    }

    #[test]
    fn select_channels_reorders_and_drops() {
        let ep = flat_episode(&[Stage::Normal, Stage::Normal]);
        let out = ep.select_channels(&["b".into(), "missing".into()]);
        assert_eq!(out.channel_names, vec!["b".to_string()]);
        assert_eq!(out.samples[0].channels, vec![2.0]);
    }
}
