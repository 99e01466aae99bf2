use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::agent::TrainConfig;
use crate::baselines::BaselineConfig;
use crate::data::AlignedPanel;
use crate::env::EnvConfig;
use crate::util::SeedStream;

/// Everything a run needs. Loaded from TOML; every field has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub baselines: BaselineConfig,
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Master seed; training, synthetic data and sampling streams derive
    /// from it.
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 0, out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding one `<TICKER>.csv` per asset.
    pub dir: Option<PathBuf>,
    pub tickers: Vec<String>,
    /// Generate prices instead of reading files.
    pub synthetic: Option<SyntheticData>,
    /// Training window; open ends mean the first / last panel date.
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    /// Backtest window; by default the whole panel, which overlaps the
    /// training window (in-sample).
    pub backtest_start: Option<NaiveDate>,
    pub backtest_end: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticData {
    pub days: usize,
    pub start_price: f64,
    /// Daily log drift per asset; the asset count follows its length.
    pub drift: Vec<f64>,
    /// Daily log-return standard deviation; 0 gives a pure drift market.
    pub volatility: f64,
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self { days: 2000, start_price: 100.0, drift: vec![0.001, -0.001], volatility: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Plot values on a log axis.
    pub log_scale: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { log_scale: true }
    }
}

/// Inclusive row range `[start, end]` of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowRange {
    pub start: usize,
    pub end: usize,
}

impl RunConfig {
    /// Parse TOML text, then apply `key.path=value` overrides. Override
    /// values are TOML literals; anything that does not parse as one is
    /// taken as a string.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, AppError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read a config file; a relative `data.dir` is resolved against the
    /// file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut config = Self::from_toml(&text, overrides)?;
        if let (Some(dir), Some(parent)) = (&config.data.dir, path.parent()) {
            if dir.is_relative() {
                config.data.dir = Some(parent.join(dir));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        self.env.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| AppError::Config(e.to_string()))?;
        if self.data.synthetic.is_none() && (self.data.dir.is_none() || self.data.tickers.is_empty()) {
            return Err(AppError::Config("set data.dir and data.tickers, or data.synthetic".into()));
        }
        if let Some(s) = &self.data.synthetic {
            if s.drift.is_empty() || s.days < 3 || s.start_price.is_nan() || s.start_price <= 0.0 || s.volatility.is_nan() || s.volatility < 0.0 {
                return Err(AppError::Config(
                    "data.synthetic needs at least one drift, days >= 3, a positive start price and volatility >= 0"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> SeedStream {
        SeedStream::new(self.run.seed)
    }

    /// Training settings with the seed derived from the master seed.
    pub fn effective_train(&self) -> TrainConfig {
        TrainConfig { seed: self.seeds().child("train").seed(), ..self.train.clone() }
    }

    pub fn train_rows(&self, panel: &AlignedPanel) -> Result<RowRange, AppError> {
        rows_for(panel, self.data.train_start, self.data.train_end, "train")
    }

    pub fn backtest_rows(&self, panel: &AlignedPanel) -> Result<RowRange, AppError> {
        rows_for(panel, self.data.backtest_start, self.data.backtest_end, "backtest")
    }
}

/// Map a date window onto panel rows. The first row never starts an
/// episode because the state needs the previous day's price.
fn rows_for(
    panel: &AlignedPanel,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
    what: &str,
) -> Result<RowRange, AppError> {
    let outside = || AppError::Range(format!("{what} range {start:?}..{end:?} lies outside the panel"));
    let s = match start {
        Some(d) => panel.index_on_or_after(d).ok_or_else(outside)?,
        None => 0,
    }
    .max(1);
    let e = match end {
        Some(d) => panel.index_on_or_before(d).ok_or_else(outside)?,
        None => panel.len() - 1,
    };
    if e <= s {
        return Err(AppError::Range(format!(
            "{what} range covers rows {s}..={e}; at least two rows after the first panel row are needed"
        )));
    }
    Ok(RowRange { start: s, end: e })
}

fn parse_literal(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => match t.remove("v") {
            Some(toml::Value::Datetime(d)) => toml::Value::String(d.to_string()),
            Some(v) => v,
            None => toml::Value::String(raw.to_string()),
        },
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `a.b.c=value` inside `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), AppError> {
    let spec = spec.trim_start_matches("--");
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| AppError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(AppError::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| AppError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_literal(raw));
    Ok(())
}
