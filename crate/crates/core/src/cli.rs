//! Command-line pipeline: ingest, train, evaluate, compare, predict.
//!
//! Settings resolve as flags > config file > built-in defaults. Every failure
//! is reported as one `error[E_*]: ...` line and maps to a fixed exit code.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::adversarial::{train, ArchConfig, Objective, TrainConfig, TrainError, TrainedModel};
use crate::eval_report::{comparison_table, emit_chart_data, evaluate, EvalError, EvalReport};
use crate::indicators::{build_feature_matrix, IndicatorError};
use crate::market_data::{parse_ohlcv_csv, MarketDataError, PriceSeries};
use crate::neural::NeuralError;
use crate::pipeline::{prepare, DataConfig, PipelineError, Prepared};
use crate::windowing::WindowError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Config => "E_CONFIG",
            ErrorKind::Data => "E_DATA",
            ErrorKind::Numeric => "E_NUMERIC",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: msg.into(),
        }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numeric,
            message: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl std::fmt::Display for CliError {
    /// Single line: embedded newlines are flattened.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.kind.code(), self.message.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

impl From<MarketDataError> for CliError {
    fn from(e: MarketDataError) -> Self {
        match e {
            MarketDataError::Parameter(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<IndicatorError> for CliError {
    fn from(e: IndicatorError) -> Self {
        match e {
            IndicatorError::Parameter(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<WindowError> for CliError {
    fn from(e: WindowError) -> Self {
        match e {
            WindowError::Parameter(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Data(e) => e.into(),
            PipelineError::Indicator(e) => e.into(),
            PipelineError::Window(e) => e.into(),
            PipelineError::Config(m) => CliError::config(m),
        }
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::NonFinite { .. } | NeuralError::NonFiniteGrad { .. } => CliError::numeric(e.to_string()),
            NeuralError::Checkpoint(_) | NeuralError::Io(_) => CliError::data(e.to_string()),
            _ => CliError::config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::config(m),
            TrainError::NonFinite { .. } => CliError::numeric(e.to_string()),
            TrainError::Neural(n) => n.into(),
            TrainError::Data(d) => d.into(),
            TrainError::Metadata(_) => CliError::data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Neural(n) => n.into(),
            EvalError::Data(d) => d.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}

/// Complete run settings; every key is optional in the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    /// Label used in reports; defaults to the data file stem.
    pub stock: Option<String>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub objectives: Vec<Objective>,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub arch: ArchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            stock: None,
            out_dir: PathBuf::from("out"),
            seed: TrainConfig::default().seed,
            objectives: Objective::ALL.to_vec(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            arch: ArchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn stock_label(&self) -> String {
        self.stock.clone().unwrap_or_else(|| {
            self.data_path
                .as_deref()
                .and_then(Path::file_stem)
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "series".into())
        })
    }

    /// Training settings with the run-level seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.window < 1 {
            return Err(CliError::config("window must be >= 1"));
        }
        if self.data.horizon < 1 {
            return Err(CliError::config("horizon must be >= 1"));
        }
        if self.objectives.is_empty() {
            return Err(CliError::config("objectives must not be empty"));
        }
        self.data.indicators.validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    fn data_path(&self) -> Result<&Path, CliError> {
        self.data_path
            .as_deref()
            .ok_or_else(|| CliError::config("data_path is not set (use --data or the config file)"))
    }

    fn tag(&self) -> String {
        format!("N{}_H{}", self.data.window, self.data.horizon)
    }

    pub fn checkpoint_path(&self, objective: Objective) -> PathBuf {
        self.out_dir.join("checkpoints").join(format!("{objective}_{}.ckpt", self.tag()))
    }

    pub fn history_path(&self, objective: Objective) -> PathBuf {
        self.out_dir.join("history").join(format!("{objective}_{}.csv", self.tag()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "stockgan", version, about = "Adversarial stock price forecasting")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for checkpoints, reports and charts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// OHLCV CSV file.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Objective to include (repeatable): dragan_fm, wgan_gp, basic_gan, lstm.
    #[arg(long = "objective")]
    pub objectives: Vec<String>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the CSV and summarize the feature matrix.
    Ingest(Overrides),
    /// Train each configured objective and write checkpoints and histories.
    Train(Overrides),
    /// Evaluate checkpoints on both splits; writes reports and chart CSVs.
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
        /// Checkpoints to evaluate; defaults to those of the configured objectives.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Build comparison tables from report files (default: all in `<out>/reports`).
    Compare { reports: Vec<PathBuf> },
    /// Forecast the next H closes after the last window of the data file.
    Predict {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn resolve(cli: &Cli, o: Option<&Overrides>) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.out {
        cfg.out_dir = p.clone();
    }
    if let Some(p) = &cli.data {
        cfg.data_path = Some(p.clone());
    }
    if let Some(o) = o {
        if !o.objectives.is_empty() {
            cfg.objectives = o
                .objectives
                .iter()
                .map(|s| s.parse::<Objective>().map_err(|e| CliError::config(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = o.window {
            cfg.data.window = v;
        }
        if let Some(v) = o.horizon {
            cfg.data.horizon = v;
        }
        if let Some(v) = o.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = o.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = o.train_fraction {
            cfg.data.train_fraction = v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            return write!(out, "{e}").map_err(|e| CliError::data(format!("stdout: {e}")));
        }
        Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            return Err(CliError::config("a subcommand is required (ingest, train, evaluate, compare, predict)"));
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("bad arguments");
            return Err(CliError::config(first.trim_start_matches("error: ")));
        }
    };
    match &cli.command {
        Command::Ingest(o) => cmd_ingest(&resolve(&cli, Some(o))?, out),
        Command::Train(o) => cmd_train(&resolve(&cli, Some(o))?, out),
        Command::Evaluate { overrides, checkpoints } => cmd_evaluate(&resolve(&cli, Some(overrides))?, checkpoints, out),
        Command::Compare { reports } => cmd_compare(&resolve(&cli, None)?, reports, out),
        Command::Predict { overrides, checkpoint } => cmd_predict(&resolve(&cli, Some(overrides))?, checkpoint, out),
    }
}

fn w(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::data(format!("stdout: {e}")))
}

pub fn load_series(path: &Path) -> Result<PriceSeries, CliError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_ohlcv_csv(BufReader::new(f)).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn prepared(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let series = load_series(cfg.data_path()?)?;
    Ok(prepare(&series, &cfg.data)?)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(())
}

pub fn cmd_ingest(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let path = cfg.data_path()?;
    let series = load_series(path)?;
    let fm = build_feature_matrix(&series, &cfg.data.indicators)?;
    let first = series.dates()[0];
    let last = *series.dates().last().expect("non-empty series");
    w(out, format_args!("file: {}", path.display()))?;
    w(out, format_args!("bars: {} ({first} .. {last})", series.len()))?;
    w(out, format_args!("range violations: {}", series.violations().len()))?;
    w(out, format_args!("warm-up rows dropped: {}", fm.dropped_dates.len()))?;
    w(out, format_args!("feature rows: {}", fm.rows()))?;
    w(out, format_args!("feature columns: {}", fm.width()))?;
    for (j, name) in fm.column_names.iter().enumerate() {
        let col = fm.values.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w(out, format_args!("  {name:<16} min {lo:>14.6}  max {hi:>14.6}"))?;
    }
    Ok(())
}

/// Trains every configured objective; a diverging objective is reported and
/// skipped, and the command fails with a numeric error once all have run.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let p = prepared(cfg)?;
    let tc = cfg.train_config();
    let mut failures = Vec::new();
    for &objective in &cfg.objectives {
        let model = match train(objective, &p.train, &tc, &cfg.arch, &p.normalizer) {
            Ok(m) => m,
            Err(e) => {
                let e = CliError::from(e);
                if e.kind != ErrorKind::Numeric {
                    return Err(e);
                }
                w(out, format_args!("{objective}: FAILED {}", e.message))?;
                failures.push(format!("{objective}: {}", e.message));
                continue;
            }
        };
        let ckpt = cfg.checkpoint_path(objective);
        let hist = cfg.history_path(objective);
        create_parent(&ckpt)?;
        create_parent(&hist)?;
        let f = File::create(&ckpt).map_err(|e| io_err(&ckpt, e))?;
        model.save(BufWriter::new(f))?;
        let mut buf = Vec::new();
        model.write_history_csv(&mut buf).map_err(|e| io_err(&hist, e))?;
        fs::write(&hist, buf).map_err(|e| io_err(&hist, e))?;
        let last = model.history.last().map_or(f64::NAN, |r| r.train_rmse);
        w(
            out,
            format_args!("{objective}: {} epochs, train rmse {last:.6}, checkpoint {}", model.history.len(), ckpt.display()),
        )?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::numeric(format!("training diverged: {}", failures.join("; "))))
    }
}

pub fn load_model(path: &Path) -> Result<TrainedModel, CliError> {
    let f = File::open(path).map_err(|e| CliError::config(format!("checkpoint {}: {e}", path.display())))?;
    Ok(TrainedModel::load(BufReader::new(f))?)
}

/// Rejects a checkpoint whose dimensions disagree with the run config.
pub fn check_dims(model: &TrainedModel, cfg: &RunConfig, features: usize) -> Result<(), CliError> {
    let checks = [
        ("window", model.window(), cfg.data.window),
        ("horizon", model.horizon(), cfg.data.horizon),
        ("features", model.spec.features(), features),
    ];
    for (field, have, want) in checks {
        if have != want {
            return Err(CliError::config(format!(
                "{field}: checkpoint was trained with {have}, config has {want}"
            )));
        }
    }
    Ok(())
}

fn report_stem(r: &EvalReport) -> String {
    format!("{}_N{}_H{}_{}", r.model_name, r.window, r.horizon, r.split)
}

pub fn cmd_evaluate(cfg: &RunConfig, checkpoints: &[PathBuf], out: &mut dyn Write) -> Result<(), CliError> {
    let p = prepared(cfg)?;
    let paths: Vec<PathBuf> = if checkpoints.is_empty() {
        cfg.objectives.iter().map(|&o| cfg.checkpoint_path(o)).collect()
    } else {
        checkpoints.to_vec()
    };
    let stock = cfg.stock_label();
    let reports_dir = cfg.out_dir.join("reports");
    let charts_dir = cfg.out_dir.join("charts");
    for d in [&reports_dir, &charts_dir] {
        fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    for path in paths {
        let model = load_model(&path)?;
        check_dims(&model, cfg, p.features.width())?;
        for (split, segs) in [("train", &p.train), ("test", &p.test)] {
            let report = evaluate(&model, segs, &stock, split)?;
            let stem = report_stem(&report);
            let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
            let rpath = reports_dir.join(format!("{stem}.json"));
            fs::write(&rpath, json + "\n").map_err(|e| io_err(&rpath, e))?;
            emit_chart_data(&report, &charts_dir, &stem)?;
            w(
                out,
                format_args!(
                    "{} {split}: rmse {:.6}  w1 {:.6}  std pred {:.6} real {:.6}",
                    report.model_name, report.rmse, report.distribution_distance, report.predicted_std, report.real_std
                ),
            )?;
        }
    }
    Ok(())
}

pub fn cmd_compare(cfg: &RunConfig, reports: &[PathBuf], out: &mut dyn Write) -> Result<(), CliError> {
    let paths: Vec<PathBuf> = if reports.is_empty() {
        let dir = cfg.out_dir.join("reports");
        let mut v: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| io_err(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else {
        reports.to_vec()
    };
    if paths.is_empty() {
        return Err(CliError::config("no reports to compare"));
    }
    let mut loaded = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        let r: EvalReport = serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        loaded.push(r);
    }
    let table = comparison_table(&loaded)?;
    let text = table.render_text();
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    let tpath = cfg.out_dir.join("comparison.txt");
    let cpath = cfg.out_dir.join("comparison.csv");
    fs::write(&tpath, &text).map_err(|e| io_err(&tpath, e))?;
    fs::write(&cpath, table.render_csv()).map_err(|e| io_err(&cpath, e))?;
    out.write_all(text.as_bytes()).map_err(|e| CliError::data(format!("stdout: {e}")))?;
    Ok(())
}

pub fn cmd_predict(cfg: &RunConfig, checkpoint: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(checkpoint)?;
    let series = load_series(cfg.data_path()?)?;
    let fm = build_feature_matrix(&series, &cfg.data.indicators)?;
    check_dims(&model, cfg, fm.width())?;
    let n = model.window();
    if fm.rows() < n {
        return Err(CliError::data(format!("need {n} feature rows, have {}", fm.rows())));
    }
    let last = fm.slice_rows(fm.rows() - n, fm.rows());
    let x = model.normalizer.normalize(last.view())?;
    let pred = model.spec.predict(&model.params, &[&x])?;
    let prices = model.normalizer.denormalize_close(&pred.row(0).to_vec())?;
    w(out, format_args!("after,step,predicted"))?;
    let anchor = last.dates.last().expect("window >= 1");
    for (h, v) in prices.iter().enumerate() {
        w(out, format_args!("{anchor},{},{v}", h + 1))?;
    }
    Ok(())
}
