//! Per-window statistical features for the random-forest branch: nine
//! statistics per channel, plus z-score normalization fitted on training
//! vectors only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of statistics extracted per channel.
pub const STATS_PER_CHANNEL: usize = 9;

/// Names of the per-channel statistics, in extraction order.
pub const STAT_NAMES: [&str; STATS_PER_CHANNEL] = [
    "mean", "std", "skewness", "kurtosis", "min", "max", "median", "q1", "q3",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("need at least 2 training vectors, got {0}")]
    TooFewSamples(usize),
    #[error("vector length {got} does not match normalizer length {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Flat feature vector: `STATS_PER_CHANNEL` values per kept channel, channel-major.
pub type FeatureVector = Vec<f64>;

/// Linear-interpolation quantile at rank h = (n-1)p over sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Nine statistics for one column of values.
///
/// Standard deviation is the sample estimate (divisor n-1). Skewness and
/// kurtosis are the population-moment forms g1 = m3 / m2^1.5 and
/// g2 = m4 / m2^2 - 3 with central moments over n; both are 0 for a
/// zero-variance column so downstream models never see non-finite inputs.
pub fn column_stats(values: &[f64]) -> [f64; STATS_PER_CHANNEL] {
    let n = values.len();
    assert!(n >= 2, "column_stats needs at least 2 values");
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let std = (m2 * nf / (nf - 1.0)).sqrt();
    let (skew, kurt) = if m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = sorted[0];
    let max = sorted[n - 1];
    let median = quantile(&sorted, 0.5);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    [mean, std, skew, kurt, min, max, median, q1, q3]
}

/// Extract the feature vector of a window: nine statistics per channel,
/// channels in input order. The window must already have missing values
/// filled.
pub fn extract_stats(values: &[Vec<f64>]) -> FeatureVector {
    let rows = values.len();
    let cols = if rows == 0 { 0 } else { values[0].len() };
    let mut out = Vec::with_capacity(cols * STATS_PER_CHANNEL);
    let mut column = vec![0.0; rows];
    for c in 0..cols {
        for (t, row) in values.iter().enumerate() {
            column[t] = row[c];
        }
        out.extend_from_slice(&column_stats(&column));
    }
    out
}

/// Per-feature z-score parameters estimated on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Fit per-feature mean and standard deviation (divisor n-1) on training
/// vectors.
pub fn fit_normalizer(train: &[FeatureVector]) -> Result<Normalizer, FeatureError> {
    if train.len() < 2 {
        return Err(FeatureError::TooFewSamples(train.len()));
    }
    let dims = train[0].len();
    for v in train {
        if v.len() != dims {
            return Err(FeatureError::LengthMismatch { expected: dims, got: v.len() });
        }
    }
    let n = train.len() as f64;
    let mut mean = vec![0.0; dims];
    for v in train {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; dims];
    for v in train {
        for (s, (&x, &m)) in std.iter_mut().zip(v.iter().zip(&mean)) {
            let d = x - m;
            *s += d * d;
        }
    }
    for s in &mut std {
        *s = (*s / (n - 1.0)).sqrt();
    }
    Ok(Normalizer { mean, std })
}

/// Z-score a vector. Features with zero training std map to 0.
pub fn apply_normalizer(norm: &Normalizer, vector: &[f64]) -> Result<FeatureVector, FeatureError> {
    if vector.len() != norm.len() {
        return Err(FeatureError::LengthMismatch { expected: norm.len(), got: vector.len() });
    }
    Ok(vector
        .iter()
        .zip(norm.mean.iter().zip(&norm.std))
        .map(|(&x, (&m, &s))| if s == 0.0 { 0.0 } else { (x - m) / s })
        .collect())
}
