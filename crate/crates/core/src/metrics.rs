//! Equity-curve statistics: compound annual return, Sharpe ratio and two
//! flavours of maximum drawdown, plus the comparison table built from them.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("curve needs at least {needed} points, has {got}")]
    TooShort { needed: usize, got: usize },
    #[error("returns have zero variance; Sharpe ratio undefined")]
    ZeroVariance,
    #[error("curve contains a non-positive or non-finite value at index {0}")]
    BadValue(usize),
    #[error("dates and values differ in length or dates are not increasing")]
    BadDates,
    #[error("no curve: {0}")]
    Unavailable(String),
}

/// Portfolio value per date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl EquityCurve {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self, MetricError> {
        if dates.len() != values.len() || dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricError::BadDates);
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(MetricError::BadValue(i));
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `date,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,value\n");
        for (d, v) in self.dates.iter().zip(&self.values) {
            let _ = writeln!(out, "{d},{v}");
        }
        out
    }

    /// Daily simple returns `V_t / V_{t-1} - 1`.
    pub fn returns(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }
}

/// `(EV / BV)^(1/n) - 1` with `n = (len - 1) / 252` years.
pub fn carr(values: &[f64]) -> Result<f64, MetricError> {
    if values.len() < 2 {
        return Err(MetricError::TooShort { needed: 2, got: values.len() });
    }
    let years = (values.len() - 1) as f64 / TRADING_DAYS_PER_YEAR;
    Ok((values[values.len() - 1] / values[0]).powf(1.0 / years) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sharpe {
    pub daily: f64,
    /// `daily * sqrt(252)`.
    pub annualized: f64,
}

/// Mean excess return over its sample standard deviation.
pub fn sharpe_from_returns(returns: &[f64], risk_free: f64) -> Result<Sharpe, MetricError> {
    if returns.len() < 2 {
        return Err(MetricError::TooShort { needed: 3, got: returns.len() + 1 });
    }
    let n = returns.len() as f64;
    let excess: Vec<f64> = returns.iter().map(|r| r - risk_free).collect();
    let mean = excess.iter().sum::<f64>() / n;
    let var = excess.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let daily = mean / var.sqrt();
    Ok(Sharpe { daily, annualized: daily * TRADING_DAYS_PER_YEAR.sqrt() })
}

/// Sharpe ratio of the curve's daily returns with a zero risk-free rate.
pub fn sharpe(values: &[f64]) -> Result<Sharpe, MetricError> {
    let returns: Vec<f64> = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    sharpe_from_returns(&returns, 0.0)
}

/// Largest `(V_peak - V_trough) / V_trough` over ordered pairs: the loss is
/// measured against the trough value, so it can exceed 1.
pub fn mdd(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0_f64;
    for &v in values {
        peak = peak.max(v);
        worst = worst.max((peak - v) / v);
    }
    worst
}

/// Conventional drawdown, `(V_peak - V_trough) / V_peak`, in `[0, 1)`.
pub fn mdd_peak(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0_f64;
    for &v in values {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    worst
}

/// One table row; each metric is either a value or the reason it is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub name: String,
    pub carr: Result<f64, MetricError>,
    pub sharpe: Result<Sharpe, MetricError>,
    pub mdd: Result<f64, MetricError>,
    pub mdd_peak: Result<f64, MetricError>,
    pub final_value: Option<f64>,
}

impl MetricsRow {
    pub fn from_values(name: &str, values: &[f64]) -> Self {
        let nonempty = |f: fn(&[f64]) -> f64| {
            if values.is_empty() {
                Err(MetricError::TooShort { needed: 1, got: 0 })
            } else {
                Ok(f(values))
            }
        };
        Self {
            name: name.to_string(),
            carr: carr(values),
            sharpe: sharpe(values),
            mdd: nonempty(mdd),
            mdd_peak: nonempty(mdd_peak),
            final_value: values.last().copied(),
        }
    }

    /// A row for a strategy that produced no curve at all.
    pub fn failed(name: &str, error: MetricError) -> Self {
        Self {
            name: name.to_string(),
            carr: Err(error.clone()),
            sharpe: Err(error.clone()),
            mdd: Err(error.clone()),
            mdd_peak: Err(error),
            final_value: None,
        }
    }

    /// `"CARR% / SR / MDD"`, e.g. `14.12% / 0.5988 / 0.4913`.
    pub fn summary(&self) -> String {
        format!(
            "{} / {} / {}",
            cell(&self.carr, |v| format!("{:.2}%", v * 100.0)),
            cell(&self.sharpe, |s| format!("{:.4}", s.annualized)),
            cell(&self.mdd, |v| format!("{v:.4}")),
        )
    }
}

/// Missing metrics render as this marker.
pub const ERROR_CELL: &str = "n/a";

fn cell<T>(r: &Result<T, MetricError>, f: impl Fn(&T) -> String) -> String {
    r.as_ref().map_or_else(|_| ERROR_CELL.to_string(), f)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

/// One row per curve, in input order.
pub fn build_report<'a>(curves: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> MetricsReport {
    MetricsReport { rows: curves.into_iter().map(|(n, v)| MetricsRow::from_values(n, v)).collect() }
}

const COLUMNS: [&str; 7] = ["strategy", "carr", "sharpe", "sharpe_daily", "mdd", "mdd_peak", "final_value"];

impl MetricsReport {
    fn cells(row: &MetricsRow) -> [String; 7] {
        [
            row.name.clone(),
            cell(&row.carr, |v| format!("{v:.6}")),
            cell(&row.sharpe, |s| format!("{:.6}", s.annualized)),
            cell(&row.sharpe, |s| format!("{:.6}", s.daily)),
            cell(&row.mdd, |v| format!("{v:.6}")),
            cell(&row.mdd_peak, |v| format!("{v:.6}")),
            row.final_value.map_or(ERROR_CELL.to_string(), |v| format!("{v:.2}")),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&Self::cells(row).join(","));
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text table followed by the one-line summaries.
    pub fn to_text(&self) -> String {
        let header: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
        let body: Vec<[String; 7]> = self.rows.iter().map(Self::cells).collect();
        let widths: Vec<usize> = (0..7)
            .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(&header);
        out.push('\n');
        for r in &body {
            out.push_str(&line(r));
            out.push('\n');
        }
        out.push('\n');
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
        for row in &self.rows {
            let _ = writeln!(out, "{:<name_w$}  {}", row.name, row.summary());
        }
        out
    }
}
