//! Per-event experiment orchestration: dataset assembly from a catalog,
//! seeded splits, training the four models (RF and TCN, classification and
//! regression), grid search, and report emission.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{apply_normalizer, extract_stats, fit_normalizer};
use crate::forest::{self, ForestModel, ForestParams, Task};
use crate::ingest::{
    load_episode_csv, select_features, Catalog, ColumnMapping, FeatureMask, IngestError,
};
use crate::label::{segment, LabelError, WindowParams};
use crate::metrics::{confusion, precision_recall_f1, rmse_mae, MetricsError};
use crate::model::{Episode, EventType, Source, Window};
use crate::tcn::{self, Standardizer, TcnConfig, TcnModel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("insufficient data: {positives} positive / {negatives} negative windows")]
    InsufficientData { positives: usize, negatives: usize },
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),
    #[error("empty hyper-parameter grid")]
    EmptyGrid,
    #[error("report i/o failed: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Forest(#[from] forest::ForestError),
    #[error(transparent)]
    Tcn(#[from] tcn::TcnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rf,
    Tcn,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Rf => write!(f, "RF"),
            Method::Tcn => write!(f, "TCN"),
        }
    }
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Classify => "classify",
        Task::Regress => "regress",
    }
}

/// Which episode sources feed the event-positive side of a dataset.
/// Normal episodes always join the negative pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFilter {
    Real,
    Simulated,
    Synthetic,
    All,
}

impl SourceFilter {
    fn admits(self, source: Source) -> bool {
        matches!(
            (self, source),
            (SourceFilter::All, _)
                | (SourceFilter::Real, Source::Real)
                | (SourceFilter::Simulated, Source::Simulated)
                | (SourceFilter::Synthetic, Source::Synthetic)
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub event: EventType,
    pub source: SourceFilter,
    /// Train/test fractions for the RF branch.
    pub rf_split: Vec<f64>,
    /// Train/validation/test fractions for the TCN branch.
    pub tcn_split: Vec<f64>,
    pub split_seed: u64,
    pub forest: ForestParams,
    pub tcn: TcnConfig,
    pub window: WindowParams,
    /// Split whole episodes instead of windows; off by default to mirror
    /// the window-level protocol.
    pub grouped_split: bool,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(event: EventType, out_dir: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            event,
            source: SourceFilter::All,
            rf_split: vec![0.8, 0.2],
            tcn_split: vec![0.7, 0.1, 0.2],
            split_seed: 0,
            forest: ForestParams::default_for(Task::Classify),
            tcn: TcnConfig::default_for(Task::Classify),
            window: WindowParams::default(),
            grouped_split: false,
            methods: vec![Method::Rf, Method::Tcn],
            out_dir,
        }
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub event: EventType,
    pub method: Method,
    pub task: Task,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

/// Per-window test predictions for one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub method: Method,
    pub task: Task,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode_id: String,
    pub minute: i64,
    pub target: f64,
    pub prediction: f64,
}

#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ReportRow>,
    pub traces: Vec<Trace>,
    /// (job name, error message) for jobs that did not finish.
    pub failures: Vec<(String, String)>,
}

/// Prepare one episode for windowing: keep masked channels, fill gaps,
/// segment. Episodes shorter than one window contribute nothing.
pub fn windows_from_episodes(
    episodes: &[Episode],
    mask: &FeatureMask,
    params: WindowParams,
) -> Result<Vec<Window>, HarnessError> {
    let mut windows = Vec::new();
    for ep in episodes {
        let prepared = ep.select_channels(&mask.kept).fill_missing();
        match segment(&prepared, params) {
            Ok(mut w) => windows.append(&mut w),
            Err(LabelError::EpisodeTooShort { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(windows)
}

/// Settings `build_event_dataset` needs from the ingestion config.
#[derive(Debug, Clone)]
pub struct IngestSettings {
    pub mapping: ColumnMapping,
    pub empty_threshold: f64,
}

impl Default for IngestSettings {
    fn default() -> Self {
        IngestSettings { mapping: ColumnMapping::default(), empty_threshold: 0.5 }
    }
}

/// Assemble the binary per-event dataset from a catalog: positives are
/// event-stage windows of the event's episodes; negatives are windows from
/// normal episodes plus the pre-transient windows of the event's episodes.
/// When no mask is given one is computed from the loaded episodes.
pub fn build_event_dataset(
    catalog: &Catalog,
    settings: &IngestSettings,
    event: EventType,
    mask: Option<FeatureMask>,
    window: WindowParams,
    source: SourceFilter,
) -> Result<(Vec<Window>, FeatureMask), HarnessError> {
    let mut episodes = Vec::new();
    for entry in &catalog.entries {
        let relevant = match entry.event {
            Some(e) => e == event && source.admits(entry.source),
            None => true,
        };
        if relevant {
            episodes.push(load_episode_csv(&entry.path, &settings.mapping)?);
        }
    }
    if episodes.is_empty() {
        return Err(HarnessError::InsufficientData { positives: 0, negatives: 0 });
    }
    let mask = match mask {
        Some(m) => m,
        None => select_features(&episodes, settings.empty_threshold)?,
    };
    let windows = windows_from_episodes(&episodes, &mask, window)?;
    let positives = windows.iter().filter(|w| w.class_label).count();
    let negatives = windows.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(HarnessError::InsufficientData { positives, negatives });
    }
    Ok((windows, mask))
}

fn check_fractions(fractions: &[f64]) -> Result<(), HarnessError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.is_empty()
        || fractions.iter().any(|&f| f <= 0.0)
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(HarnessError::BadFractions(fractions.to_vec()));
    }
    Ok(())
}

fn boundaries(total: usize, fractions: &[f64]) -> Vec<usize> {
    let mut cuts = Vec::with_capacity(fractions.len());
    let mut cum = 0.0;
    for f in fractions {
        cum += f;
        cuts.push(((cum * total as f64).round() as usize).min(total));
    }
    *cuts.last_mut().unwrap() = total;
    cuts
}

/// Shuffle windows with a seeded generator, then cut the shuffled order
/// into contiguous parts sized by the fractions.
pub fn split_windows(
    windows: &[Window],
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<Window>>, HarnessError> {
    check_fractions(fractions)?;
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let cuts = boundaries(windows.len(), fractions);
    let mut splits = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for &end in &cuts {
        if end <= start {
            return Err(HarnessError::InsufficientData { positives: 0, negatives: 0 });
        }
        splits.push(order[start..end].iter().map(|&i| windows[i].clone()).collect());
        start = end;
    }
    Ok(splits)
}

/// Episode-grouped variant: whole episodes land in a single split, cut by
/// cumulative window count over a seeded episode shuffle.
pub fn split_windows_grouped(
    windows: &[Window],
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<Window>>, HarnessError> {
    check_fractions(fractions)?;
    let mut groups: Vec<(String, Vec<Window>)> = Vec::new();
    for w in windows {
        match groups.iter_mut().find(|(id, _)| *id == w.episode_id) {
            Some((_, g)) => g.push(w.clone()),
            None => groups.push((w.episode_id.clone(), vec![w.clone()])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..groups.len()).rev() {
        groups.swap(i, rng.gen_range(0..=i));
    }
    let cuts = boundaries(windows.len(), fractions);
    let mut splits: Vec<Vec<Window>> = vec![Vec::new(); fractions.len()];
    let mut part = 0;
    let mut placed = 0;
    for (_, group) in groups {
        while part + 1 < cuts.len() && placed >= cuts[part] {
            part += 1;
        }
        placed += group.len();
        splits[part].extend(group);
    }
    if splits.iter().any(|s| s.is_empty()) {
        return Err(HarnessError::InsufficientData { positives: 0, negatives: 0 });
    }
    Ok(splits)
}

fn check_split_classes(splits: &[Vec<Window>]) -> Result<(), HarnessError> {
    for split in splits {
        let positives = split.iter().filter(|w| w.class_label).count();
        let negatives = split.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(HarnessError::InsufficientData { positives, negatives });
        }
    }
    Ok(())
}

fn split_for(
    config: &ExperimentConfig,
    windows: &[Window],
    fractions: &[f64],
) -> Result<Vec<Vec<Window>>, HarnessError> {
    let splits = if config.grouped_split {
        split_windows_grouped(windows, fractions, config.split_seed)?
    } else {
        split_windows(windows, fractions, config.split_seed)?
    };
    check_split_classes(&splits)?;
    Ok(splits)
}

fn evaluate(
    task: Task,
    test: &[Window],
    mut score: impl FnMut(&Window) -> Result<f64, HarnessError>,
) -> Result<(ReportMetrics, Vec<TraceRow>), HarnessError> {
    let mut trace = Vec::with_capacity(test.len());
    for w in test {
        let prediction = score(w)?;
        let target = match task {
            Task::Classify => {
                if w.class_label {
                    1.0
                } else {
                    0.0
                }
            }
            Task::Regress => w.prob_target,
        };
        trace.push(TraceRow {
            episode_id: w.episode_id.clone(),
            minute: w.start / 60,
            target,
            prediction,
        });
    }
    let metrics = match task {
        Task::Classify => {
            let preds: Vec<bool> = trace.iter().map(|r| r.prediction >= 0.5).collect();
            let labels: Vec<bool> = trace.iter().map(|r| r.target >= 0.5).collect();
            let c = confusion(&preds, &labels)?;
            let (p, r, f1) = precision_recall_f1(&c);
            ReportMetrics { precision: Some(p), recall: Some(r), f1: Some(f1), rmse: None, mae: None }
        }
        Task::Regress => {
            let preds: Vec<f64> = trace.iter().map(|r| r.prediction).collect();
            let targets: Vec<f64> = trace.iter().map(|r| r.target).collect();
            let (rmse, mae) = rmse_mae(&preds, &targets)?;
            ReportMetrics { precision: None, recall: None, f1: None, rmse: Some(rmse), mae: Some(mae) }
        }
    };
    Ok((metrics, trace))
}

struct ReportMetrics {
    precision: Option<f64>,
    recall: Option<f64>,
    f1: Option<f64>,
    rmse: Option<f64>,
    mae: Option<f64>,
}

/// Train and evaluate one RF job on pre-split windows. Returns the model,
/// its metrics and its test trace.
pub fn run_forest_job(
    event: EventType,
    windows_train: &[Window],
    windows_test: &[Window],
    params: &ForestParams,
    mask: &FeatureMask,
) -> Result<(ForestModel, Vec<TraceRow>, ReportRow), HarnessError> {
    let train_vectors: Vec<Vec<f64>> =
        windows_train.iter().map(|w| extract_stats(&w.values)).collect();
    let normalizer = fit_normalizer(&train_vectors)?;
    let x: Vec<Vec<f64>> = train_vectors
        .iter()
        .map(|v| apply_normalizer(&normalizer, v).expect("fitted on same dims"))
        .collect();
    let y: Vec<f64> = windows_train
        .iter()
        .map(|w| match params.task {
            Task::Classify => {
                if w.class_label {
                    1.0
                } else {
                    0.0
                }
            }
            Task::Regress => w.prob_target,
        })
        .collect();
    let model = forest::fit_forest(&x, &y, params, normalizer, mask.clone())?;
    let (metrics, trace) = evaluate(params.task, windows_test, |w| {
        Ok(model.predict_window(&w.values)?)
    })?;
    let row = ReportRow {
        event,
        method: Method::Rf,
        task: params.task,
        precision: metrics.precision,
        recall: metrics.recall,
        f1: metrics.f1,
        rmse: metrics.rmse,
        mae: metrics.mae,
        n_train: windows_train.len(),
        n_val: 0,
        n_test: windows_test.len(),
        seed: params.seed,
    };
    Ok((model, trace, row))
}

/// Train and evaluate one TCN job on pre-split windows.
pub fn run_tcn_job(
    event: EventType,
    windows_train: &[Window],
    windows_val: &[Window],
    windows_test: &[Window],
    config: &TcnConfig,
    mask: &FeatureMask,
) -> Result<(TcnModel, Vec<TraceRow>, ReportRow), HarnessError> {
    let standardizer = Standardizer::fit(windows_train, &mask.kept);
    let model = TcnModel::init(config.clone(), standardizer);
    let (model, _report) = tcn::train(model, windows_train, windows_val)?;
    let (metrics, trace) = evaluate(config.task, windows_test, |w| {
        Ok(model.score_window(&w.values)?)
    })?;
    let row = ReportRow {
        event,
        method: Method::Tcn,
        task: config.task,
        precision: metrics.precision,
        recall: metrics.recall,
        f1: metrics.f1,
        rmse: metrics.rmse,
        mae: metrics.mae,
        n_train: windows_train.len(),
        n_val: windows_val.len(),
        n_test: windows_test.len(),
        seed: config.seed,
    };
    Ok((model, trace, row))
}

/// Run the full per-event experiment on an assembled window set: up to four
/// jobs (methods x tasks), each trained on its own split and evaluated on
/// held-out test windows. Models, the report table and per-job traces are
/// written under `config.out_dir`; failed jobs are recorded and do not stop
/// the remaining jobs.
pub fn run_experiment(
    windows: &[Window],
    mask: &FeatureMask,
    config: &ExperimentConfig,
) -> Result<ExperimentOutput, HarnessError> {
    std::fs::create_dir_all(&config.out_dir)?;
    let mut output = ExperimentOutput::default();
    for &method in &config.methods {
        for task in [Task::Classify, Task::Regress] {
            let job = format!("{}_{}", method.to_string().to_lowercase(), task_name(task));
            let result = run_job(windows, mask, config, method, task);
            match result {
                Ok((mut row, trace)) => {
                    row.seed = config.split_seed;
                    output.rows.push(row);
                    output.traces.push(Trace { method, task, rows: trace });
                }
                Err(e) => output.failures.push((job, e.to_string())),
            }
        }
    }
    emit_report(&output.rows, &output.traces, &config.out_dir)?;
    Ok(output)
}

fn run_job(
    windows: &[Window],
    mask: &FeatureMask,
    config: &ExperimentConfig,
    method: Method,
    task: Task,
) -> Result<(ReportRow, Vec<TraceRow>), HarnessError> {
    match method {
        Method::Rf => {
            let splits = split_for(config, windows, &config.rf_split)?;
            let params = ForestParams { task, ..config.forest.clone() };
            let (model, trace, row) =
                run_forest_job(config.event, &splits[0], &splits[1], &params, mask)?;
            let path = config.out_dir.join(format!("forest_{}.json", task_name(task)));
            forest::save_model(&model, &path)?;
            Ok((row, trace))
        }
        Method::Tcn => {
            let splits = split_for(config, windows, &config.tcn_split)?;
            let tcn_config = TcnConfig { task, ..config.tcn.clone() };
            let (model, trace, row) =
                run_tcn_job(config.event, &splits[0], &splits[1], &splits[2], &tcn_config, mask)?;
            let path = config.out_dir.join(format!("tcn_{}.json", task_name(task)));
            tcn::save_model(&model, &path)?;
            Ok((row, trace))
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Write the report table and one trace file per job. Identical inputs
/// produce identical bytes.
pub fn emit_report(
    rows: &[ReportRow],
    traces: &[Trace],
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let report_path = dir.join("report.csv");
    let mut text =
        String::from("event,method,task,precision,recall,f1,rmse,mae,n_train,n_val,n_test,seed\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.event,
            r.method,
            task_name(r.task),
            fmt_opt(r.precision),
            fmt_opt(r.recall),
            fmt_opt(r.f1),
            fmt_opt(r.rmse),
            fmt_opt(r.mae),
            r.n_train,
            r.n_val,
            r.n_test,
            r.seed,
        ));
    }
    std::fs::write(&report_path, text)?;
    written.push(report_path);
    for t in traces {
        let path = dir.join(format!(
            "trace_{}_{}.csv",
            t.method.to_string().to_lowercase(),
            task_name(t.task)
        ));
        let mut text = String::from("episode_id,minute,target,prediction\n");
        for r in &t.rows {
            text.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                r.episode_id, r.minute, r.target, r.prediction
            ));
        }
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// Grid of forest hyper-parameters, expanded as a cartesian product in
/// declaration order.
#[derive(Debug, Clone)]
pub struct ForestGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
}

/// Grid of TCN hyper-parameters.
#[derive(Debug, Clone)]
pub struct TcnGrid {
    pub learning_rate: Vec<f64>,
    pub channels: Vec<usize>,
    pub dropout: Vec<f64>,
}

/// Validation metric for a grid point: F1 (maximized) for classification,
/// RMSE (minimized) for regression.
fn better(task: Task, candidate: f64, incumbent: f64) -> bool {
    match task {
        Task::Classify => candidate > incumbent,
        Task::Regress => candidate < incumbent,
    }
}

fn validation_metric(task: Task, trace: &[TraceRow]) -> Result<f64, HarnessError> {
    match task {
        Task::Classify => {
            let preds: Vec<bool> = trace.iter().map(|r| r.prediction >= 0.5).collect();
            let labels: Vec<bool> = trace.iter().map(|r| r.target >= 0.5).collect();
            let (_, _, f1) = precision_recall_f1(&confusion(&preds, &labels)?);
            Ok(f1)
        }
        Task::Regress => {
            let preds: Vec<f64> = trace.iter().map(|r| r.prediction).collect();
            let targets: Vec<f64> = trace.iter().map(|r| r.target).collect();
            Ok(rmse_mae(&preds, &targets)?.0)
        }
    }
}

fn eval_on_val(
    task: Task,
    val: &[Window],
    mut score: impl FnMut(&Window) -> Result<f64, HarnessError>,
) -> Result<f64, HarnessError> {
    let mut trace = Vec::with_capacity(val.len());
    for w in val {
        trace.push(TraceRow {
            episode_id: w.episode_id.clone(),
            minute: w.start / 60,
            target: match task {
                Task::Classify => {
                    if w.class_label {
                        1.0
                    } else {
                        0.0
                    }
                }
                Task::Regress => w.prob_target,
            },
            prediction: score(w)?,
        });
    }
    validation_metric(task, &trace)
}

/// Search a forest grid by validation metric over a three-way split; ties
/// keep the earlier grid point.
pub fn grid_search_forest(
    windows: &[Window],
    mask: &FeatureMask,
    base: &ForestParams,
    grid: &ForestGrid,
    config: &ExperimentConfig,
) -> Result<(ForestParams, Vec<(ForestParams, f64)>), HarnessError> {
    if grid.n_trees.is_empty() || grid.max_depth.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let splits = split_for(config, windows, &config.tcn_split)?;
    let (train, val) = (&splits[0], &splits[1]);
    let mut leaderboard = Vec::new();
    let mut best: Option<(ForestParams, f64)> = None;
    for &n_trees in &grid.n_trees {
        for &max_depth in &grid.max_depth {
            let params = ForestParams { n_trees, max_depth, ..base.clone() };
            let (model, _, _) = run_forest_job(config.event, train, val, &params, mask)?;
            let metric = eval_on_val(params.task, val, |w| {
                Ok(model.predict_window(&w.values)?)
            })?;
            leaderboard.push((params.clone(), metric));
            if best
                .as_ref()
                .map(|(_, m)| better(params.task, metric, *m))
                .unwrap_or(true)
            {
                best = Some((params, metric));
            }
        }
    }
    Ok((best.expect("grid checked non-empty").0, leaderboard))
}

/// Search a TCN grid by validation metric; ties keep the earlier grid point.
pub fn grid_search_tcn(
    windows: &[Window],
    mask: &FeatureMask,
    base: &TcnConfig,
    grid: &TcnGrid,
    config: &ExperimentConfig,
) -> Result<(TcnConfig, Vec<(TcnConfig, f64)>), HarnessError> {
    if grid.learning_rate.is_empty() || grid.channels.is_empty() || grid.dropout.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let splits = split_for(config, windows, &config.tcn_split)?;
    let (train, val) = (&splits[0], &splits[1]);
    let mut leaderboard = Vec::new();
    let mut best: Option<(TcnConfig, f64)> = None;
    for &learning_rate in &grid.learning_rate {
        for &channels in &grid.channels {
            for &dropout in &grid.dropout {
                let candidate =
                    TcnConfig { learning_rate, channels, dropout, ..base.clone() };
                let (model, _, _) =
                    run_tcn_job(config.event, train, val, val, &candidate, mask)?;
                let metric = eval_on_val(candidate.task, val, |w| {
                    Ok(model.score_window(&w.values)?)
                })?;
                leaderboard.push((candidate.clone(), metric));
                if best
                    .as_ref()
                    .map(|(_, m)| better(candidate.task, metric, *m))
                    .unwrap_or(true)
                {
                    best = Some((candidate, metric));
                }
            }
        }
    }
    Ok((best.expect("grid checked non-empty").0, leaderboard))
}
