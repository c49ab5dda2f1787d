//! Command-line interface: `synth`, `catalog`, `train`, `evaluate`,
//! `predict` and `report` subcommands wired to the pipeline.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{load_config, AppConfig};
use crate::forest::Task;
use crate::harness::{
    build_event_dataset, emit_report, run_experiment, run_forest_job, run_tcn_job,
    ExperimentConfig, IngestSettings, Method, SourceFilter, Trace,
};
use crate::ingest::{build_catalog, write_episode_csv};
use crate::model::EventType;
use crate::stream::predict_stream;
use crate::synth::generate_dataset;

pub const DATA_ROOT_ENV: &str = "WELLEVENT_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "wellevent",
    version,
    about = "Per-minute undesired-event detection for oil-well sensor streams",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted config override, e.g. --set forest.n_trees=50.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Force every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log more; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rf,
    Tcn,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Rf => Method::Rf,
            MethodArg::Tcn => Method::Tcn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classify,
    Regress,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Classify => Task::Classify,
            TaskArg::Regress => Task::Regress,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset in the CSV layout the pipeline reads.
    Synth {
        /// Output directory (one folder per event code).
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan a data root and list the discovered episode files.
    Catalog {
        /// Data root; falls back to the config file, then WELLEVENT_DATA_ROOT.
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// Train one model (one event, one method, one task).
    Train {
        /// Event code, 1..=8.
        #[arg(long)]
        event: u8,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full per-event experiment: RF and TCN, classification and
    /// regression, with a Table-style report.
    Evaluate {
        /// Event code, 1..=8.
        #[arg(long)]
        event: u8,
        #[arg(long)]
        root: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one model family.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Split whole episodes instead of windows.
        #[arg(long)]
        grouped_split: bool,
    },
    /// Stream an episode CSV through a saved model, one score per minute.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge several report.csv files into one.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// report.csv files to merge.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn resolve_root(flag: Option<PathBuf>, config: &AppConfig) -> anyhow::Result<PathBuf> {
    if let Some(r) = flag {
        return Ok(r);
    }
    if let Some(r) = &config.data.root {
        return Ok(r.clone());
    }
    if let Ok(r) = std::env::var(DATA_ROOT_ENV) {
        return Ok(PathBuf::from(r));
    }
    bail!("no data root: pass --root, set data.root in the config, or export {DATA_ROOT_ENV}")
}

fn experiment_config(
    app: &AppConfig,
    event: EventType,
    out: PathBuf,
    grouped: bool,
) -> anyhow::Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        event,
        source: SourceFilter::All,
        rf_split: app.split.rf.clone(),
        tcn_split: app.split.tcn.clone(),
        split_seed: app.split.seed,
        forest: app.forest_params(Task::Classify)?,
        tcn: app.tcn_config(Task::Classify),
        window: app.window_params(),
        grouped_split: grouped || app.split.grouped,
        methods: vec![Method::Rf, Method::Tcn],
        out_dir: out,
    })
}

fn load_app(cli: &Cli) -> anyhow::Result<AppConfig> {
    let mut app = load_config(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        app.override_seed(seed);
    }
    Ok(app)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let app = load_app(&cli)?;
    match cli.command {
        Command::Synth { ref out } => cmd_synth(&app, out),
        Command::Catalog { ref root } => cmd_catalog(&app, root.clone()),
        Command::Train { event, method, task, ref root, ref out } => {
            cmd_train(&app, event, method, task, root.clone(), out)
        }
        Command::Evaluate { event, ref root, ref out, method, grouped_split } => {
            cmd_evaluate(&app, event, root.clone(), out, method, grouped_split)
        }
        Command::Predict { ref model, ref input, ref out } => {
            let mapping = app.mapping();
            let rows = predict_stream(model, input, out, &mapping)?;
            println!("wrote {rows} minute scores to {}", out.display());
            Ok(())
        }
        Command::Report { ref out, ref inputs } => cmd_report(out, inputs),
    }
}

fn cmd_synth(app: &AppConfig, out: &Path) -> anyhow::Result<()> {
    let (specs, normals, master_seed) = app.synth_plan()?;
    let episodes = generate_dataset(&specs, normals, master_seed)?;
    let mapping = app.mapping();
    let mut written = 0usize;
    for ep in &episodes {
        let code = ep.event.map(|e| e.code()).unwrap_or(0);
        let dir = out.join(code.to_string());
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("SYNTH_{}.csv", ep.id));
        write_episode_csv(ep, &path, &mapping)?;
        written += 1;
    }
    println!(
        "generated {written} episodes ({} event, {normals} normal) under {}",
        episodes.len() - normals,
        out.display()
    );
    Ok(())
}

fn cmd_catalog(app: &AppConfig, root: Option<PathBuf>) -> anyhow::Result<()> {
    let root = resolve_root(root, app)?;
    let catalog = build_catalog(&root)?;
    for entry in &catalog.entries {
        let event = entry
            .event
            .map(|e| e.to_string())
            .unwrap_or_else(|| "Normal".to_string());
        println!(
            "{}\t{}\t{:?}\t{} samples",
            entry.path.display(),
            event,
            entry.source,
            entry.sample_count
        );
    }
    for warning in &catalog.warnings {
        eprintln!("warning: {warning}");
    }
    println!("{} episode files", catalog.entries.len());
    Ok(())
}

fn cmd_train(
    app: &AppConfig,
    event: u8,
    method: MethodArg,
    task: TaskArg,
    root: Option<PathBuf>,
    out: &Path,
) -> anyhow::Result<()> {
    let event = EventType::from_code(event)?;
    let task: Task = task.into();
    let root = resolve_root(root, app)?;
    let catalog = build_catalog(&root)?;
    let settings =
        IngestSettings { mapping: app.mapping(), empty_threshold: app.data.empty_threshold };
    let (windows, mask) = build_event_dataset(
        &catalog,
        &settings,
        event,
        None,
        app.window_params(),
        SourceFilter::All,
    )?;
    let config = experiment_config(app, event, out.to_path_buf(), false)?;
    std::fs::create_dir_all(out)?;
    let (row, trace, model_path) = match method {
        MethodArg::Rf => {
            let splits = crate::harness::split_windows(
                &windows,
                &config.rf_split,
                config.split_seed,
            )?;
            let params = app.forest_params(task)?;
            let (model, trace, row) =
                run_forest_job(event, &splits[0], &splits[1], &params, &mask)?;
            let path = out.join(format!("forest_{}.json", task_suffix(task)));
            crate::forest::save_model(&model, &path)?;
            (row, trace, path)
        }
        MethodArg::Tcn => {
            let splits = crate::harness::split_windows(
                &windows,
                &config.tcn_split,
                config.split_seed,
            )?;
            let tcn_config = app.tcn_config(task);
            let (model, trace, row) =
                run_tcn_job(event, &splits[0], &splits[1], &splits[2], &tcn_config, &mask)?;
            let path = out.join(format!("tcn_{}.json", task_suffix(task)));
            crate::tcn::save_model(&model, &path)?;
            (row, trace, path)
        }
    };
    let trace = Trace { method: method.into(), task, rows: trace };
    emit_report(std::slice::from_ref(&row), &[trace], out)?;
    println!("model saved to {}", model_path.display());
    print_row(&row);
    Ok(())
}

fn task_suffix(task: Task) -> &'static str {
    match task {
        Task::Classify => "classify",
        Task::Regress => "regress",
    }
}

fn cmd_evaluate(
    app: &AppConfig,
    event: u8,
    root: Option<PathBuf>,
    out: &Path,
    method: Option<MethodArg>,
    grouped_split: bool,
) -> anyhow::Result<()> {
    let event = EventType::from_code(event)?;
    let root = resolve_root(root, app)?;
    let catalog = build_catalog(&root)?;
    let settings =
        IngestSettings { mapping: app.mapping(), empty_threshold: app.data.empty_threshold };
    let (windows, mask) = build_event_dataset(
        &catalog,
        &settings,
        event,
        None,
        app.window_params(),
        SourceFilter::All,
    )?;
    let mut config = experiment_config(app, event, out.to_path_buf(), grouped_split)?;
    if let Some(m) = method {
        config.methods = vec![m.into()];
    }
    let output = run_experiment(&windows, &mask, &config)?;
    for row in &output.rows {
        print_row(row);
    }
    if !output.failures.is_empty() {
        for (job, err) in &output.failures {
            eprintln!("job {job} failed: {err}");
        }
        bail!("{} of {} jobs failed", output.failures.len(), output.failures.len() + output.rows.len());
    }
    println!("report written to {}", out.join("report.csv").display());
    Ok(())
}

fn print_row(row: &crate::harness::ReportRow) {
    let metric = match row.task {
        Task::Classify => format!(
            "precision {:.4}  recall {:.4}  f1 {:.4}",
            row.precision.unwrap_or(0.0),
            row.recall.unwrap_or(0.0),
            row.f1.unwrap_or(0.0)
        ),
        Task::Regress => format!(
            "rmse {:.4}  mae {:.4}",
            row.rmse.unwrap_or(0.0),
            row.mae.unwrap_or(0.0)
        ),
    };
    println!(
        "{} {} {}: {metric} (train {}, val {}, test {})",
        row.event,
        row.method,
        task_suffix(row.task),
        row.n_train,
        row.n_val,
        row.n_test
    );
}

fn cmd_report(out: &Path, inputs: &[PathBuf]) -> anyhow::Result<()> {
    let mut merged = String::new();
    for (i, input) in inputs.iter().enumerate() {
        let text = std::fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            merged.push_str(header);
            merged.push('\n');
        } else if header != merged.lines().next().unwrap_or_default() {
            bail!("{} has a different header", input.display());
        }
        for line in lines {
            if !line.trim().is_empty() {
                merged.push_str(line);
                merged.push('\n');
            }
        }
    }
    std::fs::write(out, merged)?;
    println!("merged {} reports into {}", inputs.len(), out.display());
    Ok(())
}
