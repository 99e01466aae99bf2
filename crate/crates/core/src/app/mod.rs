//! The command layer: ingest → train → backtest → compare → report, with
//! every emitted file recorded in a manifest.

mod config;
mod plot;

pub use config::{apply_override, DataSection, ReportSection, RowRange, RunConfig, RunSection, SyntheticData};
pub use plot::svg_chart;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{train, AgentCheckpoint, AgentError, DdpgAgent};
use crate::backtest::{run_policy, AgentPolicy, BacktestError, BacktestRun};
use crate::baselines::{Strategy, StrategyKind};
use crate::data::{align_panel, parse_csv, random_market, AlignedPanel, DataError};
use crate::env::Observation;
use crate::metrics::{EquityCurve, MetricError, MetricsReport, MetricsRow};
use crate::util::sha256_hex;

pub const PANEL_FILE: &str = "panel.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const PLOT_FILE: &str = "comparison.svg";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Name of the learned strategy in reports.
pub const AGENT_NAME: &str = "DDPG";

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("range: {0}")]
    Range(String),
    #[error("{context}: {source}")]
    Data { context: String, source: DataError },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Backtest(#[from] BacktestError),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Missing(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub sha256: String,
    pub bytes: u64,
}

/// Record of a run directory: the config, a hash of the inputs, every
/// written file with its content hash, and per-command wall-clock seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: Option<serde_json::Value>,
    pub input_hash: Option<String>,
    pub artifacts: BTreeMap<String, Artifact>,
    pub timings: BTreeMap<String, f64>,
}

/// Writes files under the output directory and keeps the manifest current.
struct Output {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Output {
    fn open(config: &RunConfig) -> Result<Self, AppError> {
        let dir = config.run.out_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let mut manifest: RunManifest = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|source| AppError::Json { path: path.clone(), source })?,
            Err(_) => RunManifest::default(),
        };
        manifest.config = Some(serde_json::to_value(config).expect("config serialises"));
        Ok(Self { dir, manifest })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, AppError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| AppError::io(&path, e))?;
        self.manifest
            .artifacts
            .insert(name.to_string(), Artifact { sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(path)
    }

    fn read(&self, name: &str, hint: &str) -> Result<Vec<u8>, AppError> {
        let path = self.path(name);
        std::fs::read(&path).map_err(|_| AppError::Missing(format!("{} not found; {hint}", path.display())))
    }

    fn finish(mut self, command: &str, started: Instant) -> Result<(), AppError> {
        self.manifest.timings.insert(command.to_string(), started.elapsed().as_secs_f64());
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        let path = self.path(MANIFEST_FILE);
        std::fs::write(&path, text + "\n").map_err(|e| AppError::io(&path, e))
    }
}

/// Panel cache contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCache {
    pub input_hash: String,
    pub panel: AlignedPanel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub rows: usize,
    pub assets: usize,
    pub dropped_dates: usize,
    pub skipped_rows: usize,
    pub observation_dim: usize,
    pub input_hash: String,
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "T = {} dates, M = {} assets, {} dates dropped in alignment, {} incomplete rows skipped, observation dimension {}",
            self.rows, self.assets, self.dropped_dates, self.skipped_rows, self.observation_dim
        )
    }
}

/// Build the panel described by the config, without touching the output
/// directory.
pub fn load_inputs(config: &RunConfig) -> Result<(AlignedPanel, IngestSummary), AppError> {
    let data = &config.data;
    let (panel, skipped, hash) = if let Some(s) = &data.synthetic {
        let mut rng = config.seeds().rng("synthetic");
        let panel = random_market(s.days, &vec![s.start_price; s.drift.len()], &s.drift, s.volatility, &mut rng)
            .map_err(|source| AppError::Data { context: "synthetic market".into(), source })?;
        let spec = serde_json::to_string(&(s, config.run.seed)).expect("serialisable");
        (panel, 0, sha256_hex(spec.as_bytes()))
    } else {
        let dir = data.dir.as_ref().ok_or_else(|| AppError::Config("data.dir is not set".into()))?;
        let mut series = Vec::with_capacity(data.tickers.len());
        let mut skipped = 0;
        let mut listing = String::new();
        for ticker in &data.tickers {
            let path = dir.join(format!("{ticker}.csv"));
            let bytes = std::fs::read(&path)
                .map_err(|_| AppError::Missing(format!("no data file for ticker {ticker}: {}", path.display())))?;
            let text = String::from_utf8_lossy(&bytes);
            let parsed =
                parse_csv(ticker, &text).map_err(|source| AppError::Data { context: path.display().to_string(), source })?;
            skipped += parsed.skipped_rows;
            series.push(parsed.series);
            let _ = writeln!(listing, "{ticker} {}", sha256_hex(&bytes));
        }
        let panel = align_panel(&series).map_err(|source| AppError::Data { context: "alignment".into(), source })?;
        (panel, skipped, sha256_hex(listing.as_bytes()))
    };
    let summary = IngestSummary {
        rows: panel.len(),
        assets: panel.assets(),
        dropped_dates: panel.dropped_dates,
        skipped_rows: skipped,
        observation_dim: Observation::dim(panel.assets()),
        input_hash: hash,
    };
    Ok((panel, summary))
}

pub fn cmd_ingest(config: &RunConfig) -> Result<IngestSummary, AppError> {
    let started = Instant::now();
    let mut out = Output::open(config)?;
    let (panel, summary) = load_inputs(config)?;
    let cache = PanelCache { input_hash: summary.input_hash.clone(), panel };
    out.write(PANEL_FILE, serde_json::to_string(&cache).expect("panel serialises").as_bytes())?;
    out.manifest.input_hash = Some(summary.input_hash.clone());
    out.finish("ingest", started)?;
    Ok(summary)
}

fn read_panel(out: &Output) -> Result<AlignedPanel, AppError> {
    let bytes = out.read(PANEL_FILE, "run `ingest` first")?;
    let cache: PanelCache =
        serde_json::from_slice(&bytes).map_err(|source| AppError::Json { path: out.path(PANEL_FILE), source })?;
    Ok(cache.panel)
}

fn read_agent(out: &Output, panel: &AlignedPanel) -> Result<DdpgAgent, AppError> {
    let bytes = out.read(CHECKPOINT_FILE, "run `train` first")?;
    let ckpt: AgentCheckpoint =
        serde_json::from_slice(&bytes).map_err(|source| AppError::Json { path: out.path(CHECKPOINT_FILE), source })?;
    if ckpt.tickers != panel.tickers {
        return Err(AgentError::Mismatch(format!(
            "checkpoint trained on {:?} ({} assets), panel has {:?} ({} assets)",
            ckpt.tickers,
            ckpt.tickers.len(),
            panel.tickers,
            panel.assets()
        ))
        .into());
    }
    Ok(DdpgAgent::from_checkpoint(&ckpt)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs: usize,
    pub rows: RowRange,
    pub last_reward_sum: Option<f64>,
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary, AppError> {
    let started = Instant::now();
    let mut out = Output::open(config)?;
    let panel = read_panel(&out)?;
    let rows = config.train_rows(&panel)?;
    let (agent, log) = train(&panel, &config.env, rows.start, rows.end, &config.effective_train())?;
    let ckpt = serde_json::to_string(&agent.to_checkpoint()).expect("checkpoint serialises");
    out.write(CHECKPOINT_FILE, ckpt.as_bytes())?;
    out.write(TRAIN_LOG_FILE, log.to_csv().as_bytes())?;
    out.finish("train", started)?;
    Ok(TrainSummary { epochs: log.rows.len(), rows, last_reward_sum: log.rows.last().map(|r| r.reward_sum) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSummary {
    pub file: PathBuf,
    pub final_value: f64,
    pub total_cost: f64,
    pub points: usize,
}

/// File name of the agent's backtest curve for the given cost setting.
pub fn backtest_file(cost_enabled: bool) -> String {
    format!("curve_ddpg_{}.csv", if cost_enabled { "cost" } else { "nocost" })
}

pub fn cmd_backtest(config: &RunConfig) -> Result<BacktestSummary, AppError> {
    let started = Instant::now();
    let mut out = Output::open(config)?;
    let panel = read_panel(&out)?;
    let agent = read_agent(&out, &panel)?;
    let rows = config.backtest_rows(&panel)?;
    let run = run_policy(&panel, &config.env, rows.start, rows.end, &mut AgentPolicy::new(&agent))?;
    let file = out.write(&backtest_file(config.env.cost_enabled), run.curve.to_csv().as_bytes())?;
    out.finish("backtest", started)?;
    Ok(BacktestSummary { file, final_value: run.final_value(), total_cost: run.total_cost, points: run.curve.len() })
}

/// A strategy's label with its run or the reason it failed.
pub type NamedRun = (String, Result<BacktestRun, BacktestError>);

/// Every strategy's run (or failure), in report order: the seven baselines,
/// then the agent.
pub fn run_comparison(
    config: &RunConfig,
    panel: &AlignedPanel,
    agent: &DdpgAgent,
) -> Result<Vec<NamedRun>, AppError> {
    let rows = config.backtest_rows(panel)?;
    let seeds = config.seeds();
    let mut results = Vec::with_capacity(StrategyKind::ALL.len() + 1);
    for kind in StrategyKind::ALL {
        let rng = seeds.child("baselines").rng(kind.label());
        let mut strategy = Strategy::new(kind, config.baselines.clone(), rng);
        results.push((kind.label().to_string(), run_policy(panel, &config.env, rows.start, rows.end, &mut strategy)));
    }
    let run = run_policy(panel, &config.env, rows.start, rows.end, &mut AgentPolicy::new(agent));
    results.push((AGENT_NAME.to_string(), run));
    Ok(results)
}

/// Wide CSV: a date column, then one column per strategy (empty cells for a
/// strategy that failed).
pub fn curves_to_csv(dates: &[chrono::NaiveDate], curves: &[(String, Option<EquityCurve>)]) -> String {
    let mut out = String::from("date");
    for (name, _) in curves {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, d) in dates.iter().enumerate() {
        let _ = write!(out, "{d}");
        for (_, c) in curves {
            out.push(',');
            if let Some(v) = c.as_ref().and_then(|c| c.values.get(i)) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`curves_to_csv`].
pub fn curves_from_csv(text: &str) -> Result<Vec<(String, Option<EquityCurve>)>, String> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    if header.get(0) != Some("date") {
        return Err("first column must be `date`".into());
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = vec![];
    let mut columns: Vec<Vec<Option<f64>>> = vec![vec![]; names.len()];
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        dates.push(record[0].parse::<chrono::NaiveDate>().map_err(|e| format!("{}: {e}", &record[0]))?);
        for (k, col) in columns.iter_mut().enumerate() {
            let cell = record.get(k + 1).unwrap_or("");
            col.push(if cell.is_empty() { None } else { Some(cell.parse::<f64>().map_err(|e| format!("{cell}: {e}"))?) });
        }
    }
    Ok(names
        .into_iter()
        .zip(columns)
        .map(|(name, col)| {
            let curve = col
                .into_iter()
                .collect::<Option<Vec<f64>>>()
                .and_then(|values| EquityCurve::new(dates.clone(), values).ok());
            (name, curve)
        })
        .collect())
}

fn report_for(curves: &[(String, Option<EquityCurve>)], failures: &BTreeMap<String, String>) -> MetricsReport {
    MetricsReport {
        rows: curves
            .iter()
            .map(|(name, c)| match c {
                Some(c) => MetricsRow::from_values(name, &c.values),
                None => MetricsRow::failed(
                    name,
                    MetricError::Unavailable(failures.get(name).cloned().unwrap_or_else(|| "no curve".into())),
                ),
            })
            .collect(),
    }
}

fn write_report(
    out: &mut Output,
    config: &RunConfig,
    curves: &[(String, Option<EquityCurve>)],
    failures: &BTreeMap<String, String>,
) -> Result<MetricsReport, AppError> {
    let report = report_for(curves, failures);
    out.write(REPORT_CSV, report.to_csv().as_bytes())?;
    out.write(REPORT_TXT, report.to_text().as_bytes())?;
    let plotted: Vec<(&str, &EquityCurve)> =
        curves.iter().filter_map(|(n, c)| c.as_ref().map(|c| (n.as_str(), c))).collect();
    let title = if config.env.cost_enabled { "Equity curves (with costs)" } else { "Equity curves (no costs)" };
    out.write(PLOT_FILE, svg_chart(title, &plotted, config.report.log_scale).as_bytes())?;
    Ok(report)
}

pub fn cmd_compare(config: &RunConfig) -> Result<MetricsReport, AppError> {
    let started = Instant::now();
    let mut out = Output::open(config)?;
    let panel = read_panel(&out)?;
    let agent = read_agent(&out, &panel)?;
    let rows = config.backtest_rows(&panel)?;
    let mut curves = vec![];
    let mut failures = BTreeMap::new();
    for (name, result) in run_comparison(config, &panel, &agent)? {
        match result {
            Ok(run) => {
                out.write(&format!("curves/{name}.csv"), run.curve.to_csv().as_bytes())?;
                curves.push((name, Some(run.curve)));
            }
            Err(e) => {
                failures.insert(name.clone(), e.to_string());
                curves.push((name, None));
            }
        }
    }
    out.write(CURVES_FILE, curves_to_csv(&panel.dates[rows.start..=rows.end], &curves).as_bytes())?;
    let report = write_report(&mut out, config, &curves, &failures)?;
    out.finish("compare", started)?;
    Ok(report)
}

/// Rebuild the report and plot from an existing `curves.csv`.
pub fn cmd_report(config: &RunConfig) -> Result<MetricsReport, AppError> {
    let started = Instant::now();
    let mut out = Output::open(config)?;
    let bytes = out.read(CURVES_FILE, "run `compare` first")?;
    let curves = curves_from_csv(&String::from_utf8_lossy(&bytes))
        .map_err(|message| AppError::Parse { path: out.path(CURVES_FILE), message })?;
    let report = write_report(&mut out, config, &curves, &BTreeMap::new())?;
    out.finish("report", started)?;
    Ok(report)
}
