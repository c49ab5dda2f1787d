//! Evaluation metrics: positive-class precision/recall/F1 for
//! classification and rmse/mae for probability regression.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({preds}) and labels ({labels}) differ in length")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
}

/// Binary confusion counts; the positive class is the event.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<Confusion, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Precision, recall and F1 with the 0/0 -> 0 convention for degenerate
/// cells.
pub fn precision_recall_f1(c: &Confusion) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let p = ratio(c.true_pos, c.true_pos + c.false_pos);
    let r = ratio(c.true_pos, c.true_pos + c.false_neg);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

pub fn rmse_mae(predictions: &[f64], targets: &[f64]) -> Result<(f64, f64), MetricsError> {
    if predictions.len() != targets.len() {
        return Err(MetricsError::LengthMismatch {
            preds: predictions.len(),
            labels: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = predictions.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (&p, &t) in predictions.iter().zip(targets) {
        let e = p - t;
        sq += e * e;
        abs += e.abs();
    }
    Ok(((sq / n).sqrt(), abs / n))
}
