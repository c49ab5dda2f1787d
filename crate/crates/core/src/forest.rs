//! From-scratch CART random forest for binary classification and bounded
//! regression.
//!
//! Trees grow by exhaustive midpoint search over candidate features, with
//! Gini impurity for classification and variance for regression. Leaves
//! store the positive-class fraction or the mean target, so every tree and
//! the forest emit scores in [0, 1]. Training is deterministic: tree t
//! draws its bootstrap sample and per-node feature subsets from a ChaCha8
//! stream seeded `seed + t`, so serial and parallel schedules produce the
//! same forest.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Normalizer;
use crate::ingest::FeatureMask;

pub const FOREST_FORMAT: &str = "wellevent-forest";
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("cannot compute impurity of an empty node")]
    EmptyNode,
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("input length {got} does not match model feature count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Prediction task. Classification trains on 0/1 labels and thresholds the
/// forest score at 0.5; regression trains on probability targets directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classify,
    Regress,
}

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSubset {
    /// ceil(sqrt(F)), the usual classification default.
    SqrtF,
    /// ceil(F/3), the usual regression default.
    ThirdF,
    All,
}

impl FeatureSubset {
    pub fn count(self, n_features: usize) -> usize {
        let m = match self {
            FeatureSubset::SqrtF => (n_features as f64).sqrt().ceil() as usize,
            FeatureSubset::ThirdF => (n_features as f64 / 3.0).ceil() as usize,
            FeatureSubset::All => n_features,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: FeatureSubset,
    pub task: Task,
    pub seed: u64,
}

impl ForestParams {
    /// Stock settings: 175 trees, depth 10.
    pub fn default_for(task: Task) -> ForestParams {
        ForestParams {
            n_trees: 175,
            max_depth: 10,
            min_leaf: 1,
            features_per_split: match task {
                Task::Classify => FeatureSubset::SqrtF,
                Task::Regress => FeatureSubset::ThirdF,
            },
            task,
            seed: 0,
        }
    }
}

/// One CART node. Rows with value <= threshold go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        prediction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { prediction } => *prediction,
            TreeNode::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Split criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Impurity {
    Gini,
    Variance,
}

impl Impurity {
    pub fn for_task(task: Task) -> Impurity {
        match task {
            Task::Classify => Impurity::Gini,
            Task::Regress => Impurity::Variance,
        }
    }
}

/// Gini impurity of a node with `pos` positive and `neg` negative samples.
pub fn gini(pos: usize, neg: usize) -> Result<f64, ForestError> {
    let n = pos + neg;
    if n == 0 {
        return Err(ForestError::EmptyNode);
    }
    let p = pos as f64 / n as f64;
    let q = neg as f64 / n as f64;
    Ok(1.0 - p * p - q * q)
}

fn variance(sum: f64, sum_sq: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = sum / nf;
    (sum_sq / nf - mean * mean).max(0.0)
}

fn node_impurity(y: &[f64], indices: &[usize], impurity: Impurity) -> f64 {
    match impurity {
        Impurity::Gini => {
            let pos = indices.iter().filter(|&&i| y[i] == 1.0).count();
            gini(pos, indices.len() - pos).unwrap()
        }
        Impurity::Variance => {
            let sum: f64 = indices.iter().map(|&i| y[i]).sum();
            let sum_sq: f64 = indices.iter().map(|&i| y[i] * y[i]).sum();
            variance(sum, sum_sq, indices.len())
        }
    }
}

/// A chosen split with its weighted impurity decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Two gains computed along different summation orders can disagree in the
/// last bits while being mathematically equal; treat them as tied so the
/// declared tie-break stays deterministic.
pub fn gains_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Exhaustively evaluate midpoints between consecutive distinct sorted
/// values of each candidate feature and return the split with the largest
/// weighted impurity decrease. Ties (see [`gains_tie`]) break toward the
/// lower feature index, then the lower threshold. Returns None when no
/// split has positive gain.
pub fn best_split(
    x: &[Vec<f64>],
    y: &[f64],
    feature_subset: &[usize],
    impurity: Impurity,
) -> Option<SplitCandidate> {
    let indices: Vec<usize> = (0..x.len()).collect();
    best_split_on(x, y, &indices, feature_subset, impurity, 1)
}

fn best_split_on(
    x: &[Vec<f64>],
    y: &[f64],
    indices: &[usize],
    feature_subset: &[usize],
    impurity: Impurity,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let parent = node_impurity(y, indices, impurity);
    let nf = n as f64;
    let mut features: Vec<usize> = feature_subset.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<SplitCandidate> = None;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for &f in &features {
        order.clear();
        order.extend_from_slice(indices);
        order.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).unwrap());

        // left-side accumulators, extended one sample at a time
        let mut left_pos = 0usize;
        let mut left_sum = 0.0;
        let mut left_sum_sq = 0.0;
        let total_pos = order.iter().filter(|&&i| y[i] == 1.0).count();
        let total_sum: f64 = order.iter().map(|&i| y[i]).sum();
        let total_sum_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();

        for cut in 1..n {
            let i = order[cut - 1];
            if y[i] == 1.0 {
                left_pos += 1;
            }
            left_sum += y[i];
            left_sum_sq += y[i] * y[i];
            let lo = x[order[cut - 1]][f];
            let hi = x[order[cut]][f];
            if lo == hi {
                continue;
            }
            if cut < min_leaf || n - cut < min_leaf {
                continue;
            }
            let (left_imp, right_imp) = match impurity {
                Impurity::Gini => (
                    gini(left_pos, cut - left_pos).unwrap(),
                    gini(total_pos - left_pos, (n - cut) - (total_pos - left_pos)).unwrap(),
                ),
                Impurity::Variance => (
                    variance(left_sum, left_sum_sq, cut),
                    variance(total_sum - left_sum, total_sum_sq - left_sum_sq, n - cut),
                ),
            };
            let gain = parent
                - (cut as f64 / nf) * left_imp
                - ((n - cut) as f64 / nf) * right_imp;
            if gain <= 0.0 {
                continue;
            }
            let threshold = lo + 0.5 * (hi - lo);
            let better = match &best {
                None => true,
                Some(b) => {
                    if gains_tie(gain, b.gain) {
                        f < b.feature || (f == b.feature && threshold < b.threshold)
                    } else {
                        gain > b.gain
                    }
                }
            };
            if better {
                best = Some(SplitCandidate { feature: f, threshold, gain });
            }
        }
    }
    best
}

fn leaf_prediction(y: &[f64], indices: &[usize]) -> TreeNode {
    let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64;
    TreeNode::Leaf { prediction: mean }
}

fn draw_features(rng: &mut ChaCha8Rng, n_features: usize, m: usize) -> Vec<usize> {
    let mut subset = rand::seq::index::sample(rng, n_features, m).into_vec();
    subset.sort_unstable();
    subset
}

fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    indices: &[usize],
    depth: usize,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let pure = indices.windows(2).all(|w| y[w[0]] == y[w[1]]);
    if pure || depth >= params.max_depth || indices.len() < 2 * params.min_leaf {
        return leaf_prediction(y, indices);
    }
    let n_features = x[indices[0]].len();
    if n_features == 0 {
        return leaf_prediction(y, indices);
    }
    let m = params.features_per_split.count(n_features);
    let subset = draw_features(rng, n_features, m);
    let impurity = Impurity::for_task(params.task);
    match best_split_on(x, y, indices, &subset, impurity, params.min_leaf) {
        None => leaf_prediction(y, indices),
        Some(split) => {
            let (left, right): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| x[i][split.feature] <= split.threshold);
            let left_node = grow(x, y, &left, depth + 1, params, rng);
            let right_node = grow(x, y, &right, depth + 1, params, rng);
            TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: Box::new(left_node),
                right: Box::new(right_node),
            }
        }
    }
}

/// Grow a single CART tree on the given rows, drawing per-node feature
/// subsets from `rng`.
pub fn grow_tree(
    x: &[Vec<f64>],
    y: &[f64],
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    assert!(!x.is_empty(), "grow_tree needs at least one sample");
    let indices: Vec<usize> = (0..x.len()).collect();
    grow(x, y, &indices, 0, params, rng)
}

/// A trained forest together with everything needed to score raw windows:
/// the fitted feature normalizer and the channel mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub trees: Vec<TreeNode>,
    pub normalizer: Normalizer,
    pub feature_mask: FeatureMask,
}

/// Fit a forest: tree t trains on a bootstrap resample (size n, with
/// replacement) drawn from its own seeded stream.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    params: &ForestParams,
    normalizer: Normalizer,
    feature_mask: FeatureMask,
) -> Result<ForestModel, ForestError> {
    let n = x.len();
    if n < 2 {
        return Err(ForestError::TooFewSamples(n));
    }
    assert_eq!(n, y.len());
    let trees: Vec<TreeNode> = (0..params.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
            let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow(x, y, &indices, 0, params, &mut rng)
        })
        .collect();
    Ok(ForestModel { params: params.clone(), trees, normalizer, feature_mask })
}

impl ForestModel {
    /// Forest score: the arithmetic mean of per-tree predictions, always in
    /// [0, 1]. The input must already be normalized with this model's own
    /// normalizer.
    pub fn predict(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.normalizer.len() {
            return Err(ForestError::LengthMismatch {
                expected: self.normalizer.len(),
                got: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Extract features from a raw window, normalize them with the model's
    /// normalizer, and score.
    pub fn predict_window(&self, values: &[Vec<f64>]) -> Result<f64, ForestError> {
        let stats = crate::features::extract_stats(values);
        let normalized = crate::features::apply_normalizer(&self.normalizer, &stats)
            .map_err(|_| ForestError::LengthMismatch {
                expected: self.normalizer.len(),
                got: stats.len(),
            })?;
        self.predict(&normalized)
    }

    /// Class decision for classification scores.
    pub fn classify(score: f64) -> bool {
        score >= 0.5
    }
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    model: ForestModel,
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<(), ForestError> {
    let file = ForestFile {
        format: FOREST_FORMAT.to_string(),
        version: FOREST_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| ForestError::CorruptModelFile(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ForestModel, ForestError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| ForestError::CorruptModelFile(e.to_string()))?;
    let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != FOREST_FORMAT {
        return Err(ForestError::CorruptModelFile(format!("format `{format}`")));
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != FOREST_VERSION as u64 {
        return Err(ForestError::CorruptModelFile(format!("version {version}")));
    }
    let file: ForestFile = serde_json::from_value(value)
        .map_err(|e| ForestError::CorruptModelFile(e.to_string()))?;
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FeatureMask;
    use rand::Rng;

    fn tiny_params(task: Task) -> ForestParams {
        ForestParams {
            n_trees: 5,
            max_depth: 6,
            min_leaf: 1,
            features_per_split: FeatureSubset::All,
            task,
            seed: 3,
        }
    }

    fn dummy_normalizer(dims: usize) -> Normalizer {
        Normalizer { mean: vec![0.0; dims], std: vec![1.0; dims] }
    }

    fn dummy_mask() -> FeatureMask {
        FeatureMask { kept: vec!["x".into()], dropped: vec![] }
    }

    /// Independent oracle: recompute the gain of every (feature, midpoint)
    /// candidate from scratch, scanning rows in their original order.
    pub(crate) fn oracle_best_split(
        x: &[Vec<f64>],
        y: &[f64],
        features: &[usize],
        impurity: Impurity,
    ) -> Option<(usize, f64, f64)> {
        let n = x.len();
        let imp_of = |rows: &[usize]| -> f64 {
            match impurity {
                Impurity::Gini => {
                    let pos = rows.iter().filter(|&&i| y[i] == 1.0).count();
                    let p = pos as f64 / rows.len() as f64;
                    let q = 1.0 - p;
                    1.0 - p * p - q * q
                }
                Impurity::Variance => {
                    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
                    rows.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum::<f64>()
                        / rows.len() as f64
                }
            }
        };
        let all: Vec<usize> = (0..n).collect();
        let parent = imp_of(&all);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted_features = features.to_vec();
        sorted_features.sort_unstable();
        for &f in &sorted_features {
            let mut vals: Vec<f64> = (0..n).map(|i| x[i][f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let threshold = w[0] + 0.5 * (w[1] - w[0]);
                let left: Vec<usize> = (0..n).filter(|&i| x[i][f] <= threshold).collect();
                let right: Vec<usize> = (0..n).filter(|&i| x[i][f] > threshold).collect();
                let gain = parent
                    - (left.len() as f64 / n as f64) * imp_of(&left)
                    - (right.len() as f64 / n as f64) * imp_of(&right);
                if gain <= 0.0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bf, bt, bg)) => {
                        if gains_tie(gain, bg) {
                            f < bf || (f == bf && threshold < bt)
                        } else {
                            gain > bg
                        }
                    }
                };
                if better {
                    best = Some((f, threshold, gain));
                }
            }
        }
        best
    }

    #[test]
    fn gini_known_values() {
        assert_eq!(gini(2, 2).unwrap(), 0.5);
        assert_eq!(gini(4, 0).unwrap(), 0.0);
        assert_eq!(gini(3, 1).unwrap(), 0.375);
        assert!(matches!(gini(0, 0), Err(ForestError::EmptyNode)));
    }

    #[test]
    fn perfect_gini_split() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 9.0, 10.0].iter().map(|&v| vec![v]).collect();
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let s = best_split(&x, &y, &[0], Impurity::Gini).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 5.5);
        assert_eq!(s.gain, 0.5);
    }

    #[test]
    fn constant_feature_has_no_split() {
        let x: Vec<Vec<f64>> = vec![vec![3.0]; 4];
        let y = vec![0.0, 1.0, 0.0, 1.0];
        assert!(best_split(&x, &y, &[0], Impurity::Gini).is_none());
    }

    #[test]
    fn variance_split_matches_oracle() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| vec![v]).collect();
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let s = best_split(&x, &y, &[0], Impurity::Variance).unwrap();
        assert_eq!(s.threshold, 2.5);
        let (of, ot, og) = oracle_best_split(&x, &y, &[0], Impurity::Variance).unwrap();
        assert_eq!((s.feature, s.threshold), (of, ot));
        assert!((s.gain - og).abs() < 1e-12);
    }

    #[test]
    fn best_split_matches_oracle_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..100 {
            let n = rng.gen_range(2..=20);
            let f = rng.gen_range(1..=5);
            let classify = case % 2 == 0;
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..f).map(|_| rng.gen_range(-10.0..10.0)).collect())
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|_| {
                    if classify {
                        rng.gen_range(0..2) as f64
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                })
                .collect();
            let impurity = if classify { Impurity::Gini } else { Impurity::Variance };
            let features: Vec<usize> = (0..f).collect();
            let got = best_split(&x, &y, &features, impurity);
            let want = oracle_best_split(&x, &y, &features, impurity);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some((wf, wt, wg))) => {
                    assert_eq!(g.feature, wf, "case {case}");
                    assert_eq!(g.threshold, wt, "case {case}");
                    assert!((g.gain - wg).abs() < 1e-9, "case {case}");
                }
                other => panic!("case {case}: {other:?}"),
            }
        }
    }

    #[test]
    fn unbounded_tree_fits_consistent_labels_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| if r[0] + r[1] > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let params = ForestParams { max_depth: 50, ..tiny_params(Task::Classify) };
        let mut grow_rng = ChaCha8Rng::seed_from_u64(1);
        let tree = grow_tree(&x, &y, &params, &mut grow_rng);
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!(tree.predict(row), label);
        }
    }

    #[test]
    fn depth_one_is_a_stump() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 9.0, 10.0].iter().map(|&v| vec![v]).collect();
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let params = ForestParams { max_depth: 1, ..tiny_params(Task::Classify) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = grow_tree(&x, &y, &params, &mut rng);
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn identical_rows_with_mixed_labels_become_a_fraction_leaf() {
        let x = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let y = vec![0.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tree = grow_tree(&x, &y, &tiny_params(Task::Classify), &mut rng);
        assert_eq!(tree, TreeNode::Leaf { prediction: 0.5 });
    }

    #[test]
    fn trees_respect_max_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..200).map(|_| rng.gen_range(0..2) as f64).collect();
        let params = ForestParams { max_depth: 3, n_trees: 10, ..tiny_params(Task::Classify) };
        let model =
            fit_forest(&x, &y, &params, dummy_normalizer(4), dummy_mask()).unwrap();
        assert!(model.trees.iter().all(|t| t.depth() <= 3));
        assert_eq!(model.trees.len(), 10);
    }

    #[test]
    fn forest_prediction_is_exact_tree_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
        let params = ForestParams { n_trees: 7, ..tiny_params(Task::Regress) };
        let model =
            fit_forest(&x, &y, &params, dummy_normalizer(3), dummy_mask()).unwrap();
        for row in x.iter().take(10) {
            let mean =
                model.trees.iter().map(|t| t.predict(row)).sum::<f64>() / 7.0;
            assert_eq!(model.predict(row).unwrap(), mean);
            let p = model.predict(row).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn single_sample_forest_is_rejected() {
        let err = fit_forest(
            &[vec![1.0]],
            &[1.0],
            &tiny_params(Task::Classify),
            dummy_normalizer(1),
            dummy_mask(),
        );
        assert!(matches!(err, Err(ForestError::TooFewSamples(1))));
    }

    #[test]
    fn same_seed_gives_identical_serialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let y: Vec<f64> = (0..30).map(|_| rng.gen_range(0..2) as f64).collect();
        let params = tiny_params(Task::Classify);
        let a = fit_forest(&x, &y, &params, dummy_normalizer(4), dummy_mask()).unwrap();
        let b = fit_forest(&x, &y, &params, dummy_normalizer(4), dummy_mask()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn monotone_feature_transform_preserves_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| if r[2] > 0.3 { 1.0 } else { 0.0 })
            .collect();
        let mapped: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().map(|v| v.powi(3) + 2.0 * v).collect())
            .collect();
        let params = ForestParams { max_depth: 5, ..tiny_params(Task::Classify) };
        let mut rng_a = ChaCha8Rng::seed_from_u64(2);
        let mut rng_b = ChaCha8Rng::seed_from_u64(2);
        let tree_a = grow_tree(&x, &y, &params, &mut rng_a);
        let tree_b = grow_tree(&mapped, &y, &params, &mut rng_b);
        for (orig, trans) in x.iter().zip(&mapped) {
            assert_eq!(tree_a.predict(orig), tree_b.predict(trans));
        }
    }

    #[test]
    fn save_load_round_trip_predicts_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let y: Vec<f64> = (0..30).map(|_| rng.gen_range(0..2) as f64).collect();
        let params = tiny_params(Task::Classify);
        let model =
            fit_forest(&x, &y, &params, dummy_normalizer(4), dummy_mask()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        for row in &x {
            assert_eq!(model.predict(row).unwrap(), loaded.predict(row).unwrap());
        }
    }

    #[test]
    fn truncated_model_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.json");
        let model = fit_forest(
            &[vec![0.0], vec![1.0]],
            &[0.0, 1.0],
            &tiny_params(Task::Classify),
            dummy_normalizer(1),
            dummy_mask(),
        )
        .unwrap();
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(ForestError::CorruptModelFile(_))));
    }

    #[test]
    fn version_mismatch_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.json");
        let model = fit_forest(
            &[vec![0.0], vec![1.0]],
            &[0.0, 1.0],
            &tiny_params(Task::Classify),
            dummy_normalizer(1),
            dummy_mask(),
        )
        .unwrap();
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, text).unwrap();
        match load_model(&path) {
            Err(ForestError::CorruptModelFile(msg)) => assert!(msg.contains("version")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn predict_rejects_wrong_length() {
        let model = fit_forest(
            &[vec![0.0], vec![1.0]],
            &[0.0, 1.0],
            &tiny_params(Task::Classify),
            dummy_normalizer(1),
            dummy_mask(),
        )
        .unwrap();
        assert!(matches!(
            model.predict(&[1.0, 2.0]),
            Err(ForestError::LengthMismatch { expected: 1, got: 2 })
        ));
    }
}
