//! Command-line front end.

mod config;
mod heatmap;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tracing::{info, info_span, warn};

pub use config::{BackendConfig, BackendKind, DataPaths, RunConfig, STANDARD_H_IN};
pub use heatmap::{emit_calendar_heatmap, read_date_mape, render_calendar_heatmap, HeatmapError};

use crate::evaluate::{
    baseline_persistence, baseline_result, breakdown, emit_report, pair_results, per_horizon_report,
    write_key_mape_csv, Dimension, EvalError, EvalPair, HistoricalAverage, MetricReport, ReportFormat,
};
use crate::inference::{predict_batch_with, BatchOutcome, ChatBackend, HttpBackend, MockBackend, ENV_API_KEY};
use crate::ingest::{build_dataset, read_tasks, write_tasks, IngestError};
use crate::io::{write_atomic, write_jsonl, IoError};
use crate::model::{AblationSetting, LabeledTask, LocalHour, PredictionResult, Scenario};
use crate::prompt::{export_sft_with, PromptCompiler, PromptError, TemplateSet};
use crate::select::{write_clusters_csv, SelectError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "traffic-llm",
    version,
    about = "Traffic volume forecasting with chat language models"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log filter used when RUST_LOG is unset.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    /// Accept history lengths other than 4, 8, 12 and horizons other than 12.
    #[arg(long, global = true)]
    pub allow_nonstandard_windows: bool,
    #[command(flatten)]
    pub prompt: PromptFlags,
    #[command(flatten)]
    pub backend: BackendFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PromptFlags {
    /// Input setting A-K of the prompt ablation grid.
    #[arg(long, global = true)]
    pub setting: Option<AblationSetting>,
    /// Ask the model to explain its prediction.
    #[arg(long, global = true)]
    pub explain: bool,
    /// Number of explanation demonstrations in explanation mode.
    #[arg(long, global = true)]
    pub few_shot: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BackendFlags {
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long, global = true, env = "TRAFFIC_LLM_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, global = true, env = "TRAFFIC_LLM_MODEL")]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub max_new_tokens: Option<u32>,
    #[arg(long, global = true, env = "TRAFFIC_LLM_TIMEOUT_SECS")]
    pub timeout_secs: Option<f64>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub retries: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load raw files and write train/test task JSONL.
    BuildDataset(BuildDatasetArgs),
    /// Write the rendered prompts of a task file.
    Render(RenderArgs),
    /// Write supervised fine-tuning records for the training tasks.
    ExportSft(ExportSftArgs),
    /// Run the backend over a task file and write results JSONL.
    Predict(PredictArgs),
    /// Score results against ground truth.
    Evaluate(EvaluateArgs),
    /// Predict one task with and without an injected event.
    Whatif(WhatifArgs),
    /// Per-date MAPE table and calendar heatmap.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub flow_dir: Option<PathBuf>,
    #[arg(long)]
    pub sensors: Option<PathBuf>,
    #[arg(long)]
    pub poi: Option<PathBuf>,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    #[arg(long)]
    pub bucket_table: Option<PathBuf>,
    #[arg(long)]
    pub granularity: Option<u32>,
    #[arg(long)]
    pub h_in: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub train_years: Option<Vec<i32>>,
    #[arg(long, value_delimiter = ',')]
    pub test_years: Option<Vec<i32>>,
    /// Keep only one representative sensor per PoI cluster.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// PoI categories per direction in the clustering features.
    #[arg(long, requires = "clusters")]
    pub top_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Also print the prompts to stdout.
    #[arg(long)]
    pub print: bool,
}

#[derive(Debug, Args)]
pub struct ExportSftArgs {
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub failures: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Also score the historical-average and persistence baselines.
    #[arg(long)]
    pub baselines: bool,
    /// Training tasks for the historical-average baseline.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Breakdown dimensions (period, day_type, weather, sensor, date).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct WhatifArgs {
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Task id; the first task when omitted.
    #[arg(long)]
    pub task_id: Option<String>,
    /// `accident`, `sandstorm` or a one-sentence event description.
    #[arg(long, default_value = "accident")]
    pub scenario: String,
    /// Event hour as `YYYY-MM-DD HH:MM`; the first predicted hour when omitted.
    #[arg(long)]
    pub event_hour: Option<LocalHour>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Existing `date,mape` CSV to plot.
    #[arg(long)]
    pub per_date_csv: Option<PathBuf>,
    /// Tasks and results to compute the per-date table from.
    #[arg(long, requires = "results")]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(Vec<String>),
    Data(String),
    Backend(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Data(_) => EXIT_DATA,
            Self::Backend(_) => EXIT_BACKEND,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Data(_) => "data",
            Self::Backend(_) => "backend",
            Self::Internal(_) => "internal",
        }
    }

    fn messages(&self) -> Vec<String> {
        match self {
            Self::Config(m) => m.clone(),
            Self::Data(m) | Self::Backend(m) | Self::Internal(m) => vec![m.clone()],
        }
    }

    /// One JSON line for stderr.
    pub fn summary(&self, run_id: &str) -> String {
        serde_json::json!({
            "status": "error",
            "run_id": run_id,
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "errors": self.messages(),
        })
        .to_string()
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}
data_error!(IngestError, PromptError, EvalError, IoError, HeatmapError, SelectError);

type CliResult<T> = Result<T, CliError>;
type BaselineFn<'a> = Box<dyn Fn(&LabeledTask) -> Vec<u32> + 'a>;

fn new_run_id() -> String {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    format!("{:08x}", (nanos as u64 ^ ((std::process::id() as u64) << 32)) as u32)
}

fn init_logging(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(level))
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}

/// Applies command-line overrides and returns the names of the keys they set.
pub fn apply_flags(cfg: &mut RunConfig, cli: &Cli) -> Vec<&'static str> {
    let mut set = Vec::new();
    macro_rules! over {
        ($src:expr, $dst:expr, $name:literal) => {
            if let Some(v) = $src.clone() {
                $dst = v;
                set.push($name);
            }
        };
    }
    over!(cli.out, cfg.output_dir, "output_dir");
    over!(cli.seed, cfg.seed, "seed");
    if cli.allow_nonstandard_windows {
        cfg.allow_nonstandard_windows = true;
        set.push("allow_nonstandard_windows");
    }
    let b = &cli.backend;
    over!(b.backend, cfg.backend.kind, "backend.kind");
    if let Some(e) = &b.endpoint {
        cfg.backend.endpoint = Some(e.clone());
        set.push("backend.endpoint");
    }
    over!(b.model, cfg.backend.model, "backend.model");
    over!(b.temperature, cfg.backend.temperature, "backend.temperature");
    over!(b.max_new_tokens, cfg.backend.max_new_tokens, "backend.max_new_tokens");
    over!(
        b.timeout_secs,
        cfg.backend.request_timeout_secs,
        "backend.request_timeout_secs"
    );
    over!(b.parallelism, cfg.backend.parallelism, "backend.parallelism");
    over!(b.retries, cfg.backend.max_retries, "backend.max_retries");

    let p = &cli.prompt;
    if p.setting.is_some() || p.explain || p.few_shot.is_some() {
        let mut opts = cfg.prompt.unwrap_or_default();
        if let Some(s) = p.setting {
            let flags = s.options();
            opts.include_date = flags.include_date;
            opts.include_weather = flags.include_weather;
            opts.include_pois = flags.include_pois;
            opts.include_domain_knowledge = flags.include_domain_knowledge;
            opts.include_cot = flags.include_cot;
        }
        if p.explain {
            opts.explanation_mode = true;
        }
        if let Some(n) = p.few_shot {
            opts.few_shot_explanations = n;
        }
        cfg.prompt = Some(opts);
        set.push("prompt");
    }

    if let Command::BuildDataset(a) = &cli.command {
        let d = &mut cfg.data;
        macro_rules! path {
            ($src:expr, $dst:expr, $name:literal) => {
                if let Some(v) = &$src {
                    $dst = Some(v.clone());
                    set.push($name);
                }
            };
        }
        path!(a.flow_dir, d.flow_dir, "data.flow_dir");
        path!(a.sensors, d.sensors, "data.sensors");
        path!(a.poi, d.poi, "data.poi");
        path!(a.weather, d.weather, "data.weather");
        path!(a.holidays, d.holidays, "data.holidays");
        path!(a.bucket_table, d.bucket_table, "data.bucket_table");
        let ds = &mut cfg.dataset;
        over!(
            a.granularity,
            ds.flow_granularity_minutes,
            "dataset.flow_granularity_minutes"
        );
        over!(a.h_in, ds.h_in, "dataset.h_in");
        over!(a.stride, ds.stride_hours, "dataset.stride_hours");
        over!(a.train_years, ds.train_years, "dataset.train_years");
        over!(a.test_years, ds.test_years, "dataset.test_years");
        if let Some(k) = a.clusters {
            let mut sel = ds.selection.clone().unwrap_or_default();
            sel.clusters = k;
            set.push("dataset.selection.clusters");
            if let Some(n) = a.top_n {
                sel.top_n = n;
                set.push("dataset.selection.top_n");
            }
            ds.selection = Some(sel);
        }
    }
    if let Some(sel) = cfg.dataset.selection.as_mut() {
        if cli.seed.is_some() {
            sel.seed = cfg.seed;
        }
    }
    set
}

/// Resolves the effective configuration: flags over file over defaults.
pub fn resolve_config(cli: &Cli) -> CliResult<(RunConfig, Vec<&'static str>)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Config(vec![e]))?,
        None => RunConfig::default(),
    };
    let set = apply_flags(&mut cfg, cli);
    cfg.validate().map_err(CliError::Config)?;
    Ok((cfg, set))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(&cli.log_level);
    let run_id = new_run_id();
    let span = info_span!("run", run_id = %run_id);
    let _guard = span.enter();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&cli)));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("{}", e.summary(&run_id));
            e.exit_code()
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            let e = CliError::Internal(msg);
            eprintln!("{}", e.summary(&run_id));
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let (cfg, overridden) = resolve_config(cli)?;
    let source = cli
        .config
        .as_ref()
        .map_or("none".to_string(), |p| p.display().to_string());
    eprintln!(
        "# effective configuration (flags > file > defaults); file: {source}; flags: [{}]\n{}",
        overridden.join(", "),
        cfg.to_toml()
    );
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Internal(format!("{}: {e}", cfg.output_dir.display())))?;
    let templates = match &cfg.data.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::bundled().clone(),
    };
    let compiler = PromptCompiler::new(&templates);
    match &cli.command {
        Command::BuildDataset(_) => cmd_build_dataset(&cfg),
        Command::Render(a) => cmd_render(&cfg, &compiler, a),
        Command::ExportSft(a) => cmd_export_sft(&cfg, &compiler, a),
        Command::Predict(a) => cmd_predict(&cfg, &compiler, a),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
        Command::Whatif(a) => cmd_whatif(&cfg, &compiler, a),
        Command::Report(a) => cmd_report(&cfg, a),
    }
}

fn out_path(cfg: &RunConfig, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.output_dir.join(default))
}

fn load_tasks(cfg: &RunConfig, explicit: &Option<PathBuf>, default: &str) -> CliResult<Vec<LabeledTask>> {
    let path = out_path(cfg, explicit, default);
    let mut tasks = read_tasks(&path)?;
    if let Some(opts) = cfg.prompt {
        for t in &mut tasks {
            t.task.options = opts;
        }
    }
    Ok(tasks)
}

fn make_backend(cfg: &RunConfig) -> Box<dyn ChatBackend> {
    match cfg.backend.kind {
        BackendKind::Mock => Box::new(MockBackend),
        BackendKind::Http => {
            let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
            let endpoint = cfg.backend.endpoint.clone().unwrap_or_default();
            Box::new(HttpBackend::new(endpoint, cfg.backend.model.clone(), key))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        w.write_all(b"\n")
    })?;
    Ok(())
}

fn cmd_build_dataset(cfg: &RunConfig) -> CliResult<()> {
    let inputs = cfg.dataset_inputs().map_err(CliError::Config)?;
    let mut dataset_cfg = cfg.dataset.clone();
    if let Some(opts) = cfg.prompt {
        dataset_cfg.options = opts;
    }
    let built = build_dataset(&inputs, &dataset_cfg)?;
    let out = &cfg.output_dir;
    write_tasks(&out.join("tasks_train.jsonl"), &built.split.train)?;
    write_tasks(&out.join("tasks_test.jsonl"), &built.split.test)?;
    write_json(&out.join("build_report.json"), &built.report)?;
    if let Some(sel) = &built.selection {
        write_clusters_csv(
            &out.join("clusters.csv"),
            &sel.vectors,
            &sel.result,
            &sel.representatives,
        )?;
    }
    let r = &built.report;
    println!(
        "sensors={} train={} test={} dead_windows={} skipped_missing={} missing_poi={} weather_filled={}",
        r.sensors,
        r.train,
        r.test,
        r.dead_windows,
        r.skipped_missing,
        r.missing_poi.len(),
        r.weather_filled
    );
    Ok(())
}

#[derive(Serialize)]
struct RenderedPrompt<'a> {
    task_id: &'a str,
    messages: Vec<crate::prompt::ChatMessage>,
}

fn cmd_render(cfg: &RunConfig, compiler: &PromptCompiler<'_>, a: &RenderArgs) -> CliResult<()> {
    let tasks = load_tasks(cfg, &a.tasks, "tasks_test.jsonl")?;
    let limit = a.limit.unwrap_or(usize::MAX);
    let examples = &compiler.templates().explanations;
    let mut rendered = Vec::new();
    for lt in tasks.iter().take(limit) {
        let bundle = compiler.bundle(&lt.task, examples)?;
        if a.print {
            println!("=== {} ===", lt.task.id);
            for m in bundle.messages() {
                println!("[{:?}]\n{}\n", m.role, m.content);
            }
        }
        rendered.push(RenderedPrompt {
            task_id: &lt.task.id,
            messages: bundle.messages(),
        });
    }
    let path = out_path(cfg, &a.output, "prompts.jsonl");
    write_jsonl(&path, &rendered)?;
    info!(count = rendered.len(), path = %path.display(), "prompts written");
    Ok(())
}

fn cmd_export_sft(cfg: &RunConfig, compiler: &PromptCompiler<'_>, a: &ExportSftArgs) -> CliResult<()> {
    let tasks = load_tasks(cfg, &a.tasks, "tasks_train.jsonl")?;
    let options = cfg.prompt.unwrap_or_default();
    let split = crate::ingest::DatasetSplit {
        train: tasks,
        test: Vec::new(),
    };
    let path = out_path(cfg, &a.output, "sft.jsonl");
    let n = export_sft_with(compiler, &split, &options, &path)?;
    println!("sft_records={n} path={}", path.display());
    Ok(())
}

fn run_batch(cfg: &RunConfig, compiler: &PromptCompiler<'_>, tasks: &[crate::model::PredictionTask]) -> BatchOutcome {
    let backend = make_backend(cfg);
    info!(backend = backend.name(), tasks = tasks.len(), "predicting");
    predict_batch_with(
        compiler,
        tasks,
        &compiler.templates().explanations,
        backend.as_ref(),
        &cfg.backend.params(),
        &cfg.backend.batch(),
    )
}

fn cmd_predict(cfg: &RunConfig, compiler: &PromptCompiler<'_>, a: &PredictArgs) -> CliResult<()> {
    let tasks = load_tasks(cfg, &a.tasks, "tasks_test.jsonl")?;
    let tasks: Vec<_> = tasks
        .into_iter()
        .take(a.limit.unwrap_or(usize::MAX))
        .map(|t| t.task)
        .collect();
    let outcome = run_batch(cfg, compiler, &tasks);
    let results_path = out_path(cfg, &a.output, "results.jsonl");
    let failures_path = out_path(cfg, &a.failures, "failures.jsonl");
    write_jsonl(&results_path, &outcome.results)?;
    write_jsonl(&failures_path, &outcome.failures)?;
    println!(
        "results={} failures={} path={}",
        outcome.results.len(),
        outcome.failures.len(),
        results_path.display()
    );
    if !outcome.failures.is_empty() {
        return Err(CliError::Backend(format!(
            "{} of {} tasks failed after retries; see {}",
            outcome.failures.len(),
            tasks.len(),
            failures_path.display()
        )));
    }
    Ok(())
}

fn summary_table(name: &str, report: &MetricReport) -> String {
    let mut s = format!("{name}\nstep    rmse      mae       mape%\n");
    for (step, m) in report.summary() {
        let mape = m.mape.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "{step:<7} {:<9.4} {:<9.4} {mape}", m.rmse, m.mae);
    }
    s
}

fn write_reports(cfg: &RunConfig, prefix: &str, pairs: &[EvalPair], dims: &[Dimension]) -> CliResult<MetricReport> {
    let mut report = per_horizon_report(pairs)?;
    for &d in dims {
        report.add_breakdown(pairs, d)?;
    }
    let out = &cfg.output_dir;
    emit_report(&report, &out.join(format!("{prefix}report.csv")), ReportFormat::Csv)?;
    emit_report(&report, &out.join(format!("{prefix}report.json")), ReportFormat::Json)?;
    write_key_mape_csv(
        &out.join(format!("{prefix}per_date_mape.csv")),
        "date",
        &breakdown(pairs, Dimension::Date)?,
    )?;
    write_key_mape_csv(
        &out.join(format!("{prefix}per_sensor_mape.csv")),
        "sensor_id",
        &breakdown(pairs, Dimension::Sensor)?,
    )?;
    Ok(report)
}

fn cmd_evaluate(cfg: &RunConfig, a: &EvaluateArgs) -> CliResult<()> {
    let tasks = load_tasks(cfg, &a.tasks, "tasks_test.jsonl")?;
    let results_path = out_path(cfg, &a.results, "results.jsonl");
    let results: Vec<PredictionResult> = crate::io::read_jsonl(&results_path)?;
    let dims: Vec<Dimension> = match &a.dims {
        Some(names) => names
            .iter()
            .map(|n| n.parse())
            .collect::<Result<_, EvalError>>()
            .map_err(|e| CliError::Config(vec![e.to_string()]))?,
        None => Dimension::ALL.to_vec(),
    };
    let (pairs, missing) = pair_results(&tasks, &results)?;
    if !missing.is_empty() {
        warn!(missing = missing.len(), "tasks without a result are left out");
    }
    if pairs.is_empty() {
        return Err(CliError::Data("no task has a matching result".into()));
    }
    let report = write_reports(cfg, "", &pairs, &dims)?;
    print!("{}", summary_table("model", &report));

    if a.baselines {
        let train = load_tasks(cfg, &a.train, "tasks_train.jsonl")?;
        let ha = HistoricalAverage::fit(&train)?;
        let evaluated: Vec<&LabeledTask> = tasks.iter().filter(|t| !missing.contains(&t.task.id)).collect();
        let runs: [(&str, BaselineFn<'_>); 2] = [
            ("historical_average", Box::new(|t: &LabeledTask| ha.predict(&t.task))),
            ("persistence", Box::new(|t: &LabeledTask| baseline_persistence(&t.task))),
        ];
        for (name, predict) in runs {
            let results: Vec<PredictionResult> =
                evaluated.iter().map(|t| baseline_result(&t.task, predict(t))).collect();
            let owned: Vec<LabeledTask> = evaluated.iter().map(|t| (*t).clone()).collect();
            let (pairs, _) = pair_results(&owned, &results)?;
            let report = write_reports(cfg, &format!("baseline_{name}_"), &pairs, &dims)?;
            print!("{}", summary_table(name, &report));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct WhatifOutput {
    task_id: String,
    scenario: Scenario,
    hours: Vec<LocalHour>,
    normal: PredictionResult,
    what_if: PredictionResult,
    delta: Vec<i64>,
    ground_truth: Vec<u32>,
}

fn parse_scenario(text: &str, at: LocalHour) -> CliResult<Scenario> {
    match text.trim().to_ascii_lowercase().as_str() {
        "accident" => Ok(Scenario::accident(at)),
        "sandstorm" => Ok(Scenario::sandstorm(at)),
        _ => Scenario::new(text.trim(), at).map_err(|e| CliError::Config(vec![e.to_string()])),
    }
}

fn cmd_whatif(cfg: &RunConfig, compiler: &PromptCompiler<'_>, a: &WhatifArgs) -> CliResult<()> {
    let tasks = load_tasks(cfg, &a.tasks, "tasks_test.jsonl")?;
    let labeled = match &a.task_id {
        Some(id) => tasks
            .iter()
            .find(|t| &t.task.id == id)
            .ok_or_else(|| CliError::Data(format!("task {id} not found")))?,
        None => tasks
            .first()
            .ok_or_else(|| CliError::Data("task file is empty".into()))?,
    };
    let normal = labeled.task.clone();
    let at = a.event_hour.unwrap_or_else(|| normal.step_hour(1));
    let scenario = parse_scenario(&a.scenario, at)?;
    let mut altered = normal.clone();
    altered.scenario = Some(scenario.clone());
    altered
        .validate()
        .map_err(|e| CliError::Config(vec![format!("scenario: {e}")]))?;

    let outcome = run_batch(cfg, compiler, &[normal.clone(), altered]);
    if !outcome.failures.is_empty() || outcome.results.len() != 2 {
        let detail: Vec<String> = outcome.failures.iter().map(|f| f.error.clone()).collect();
        return Err(CliError::Backend(format!(
            "what-if prediction failed: {}",
            detail.join("; ")
        )));
    }
    let mut results = outcome.results.into_iter();
    let (base, what_if) = (
        results.next().expect("two results"),
        results.next().expect("two results"),
    );
    let hours: Vec<LocalHour> = (1..=normal.horizon).map(|s| normal.step_hour(s)).collect();
    let delta: Vec<i64> = base
        .values
        .iter()
        .zip(&what_if.values)
        .map(|(b, w)| *w as i64 - *b as i64)
        .collect();

    println!("task {}: {}", normal.id, scenario.description);
    println!("{:<18} {:>8} {:>8} {:>7}", "hour", "normal", "what-if", "delta");
    for i in 0..hours.len() {
        println!(
            "{:<18} {:>8} {:>8} {:>+7}",
            hours[i].to_string(),
            base.values[i],
            what_if.values[i],
            delta[i]
        );
    }
    let output = WhatifOutput {
        task_id: normal.id.clone(),
        scenario,
        hours,
        normal: base,
        what_if,
        delta,
        ground_truth: labeled.target.clone(),
    };
    write_json(&out_path(cfg, &a.output, "whatif.json"), &output)?;
    Ok(())
}

fn cmd_report(cfg: &RunConfig, a: &ReportArgs) -> CliResult<()> {
    let csv_path = match (&a.tasks, &a.results) {
        (Some(tasks), Some(results)) => {
            let tasks = read_tasks(tasks)?;
            let results: Vec<PredictionResult> = crate::io::read_jsonl(results)?;
            let (pairs, _) = pair_results(&tasks, &results)?;
            if pairs.is_empty() {
                return Err(CliError::Data("no task has a matching result".into()));
            }
            let path = cfg.output_dir.join("per_date_mape.csv");
            write_key_mape_csv(&path, "date", &breakdown(&pairs, Dimension::Date)?)?;
            let per_sensor: BTreeMap<String, _> = breakdown(&pairs, Dimension::Sensor)?;
            write_key_mape_csv(&cfg.output_dir.join("per_sensor_mape.csv"), "sensor_id", &per_sensor)?;
            path
        }
        _ => out_path(cfg, &a.per_date_csv, "per_date_mape.csv"),
    };
    let svg = out_path(cfg, &a.output, "calendar_heatmap.svg");
    emit_calendar_heatmap(&csv_path, &svg)?;
    println!("heatmap={}", svg.display());
    Ok(())
}
