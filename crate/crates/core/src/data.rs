//! Daily bar ingestion, multi-asset date alignment and per-asset features.
//!
//! Input files follow the Yahoo Finance export layout
//! (`Date,Open,High,Low,Close,Adj Close,Volume`). Rows with any empty (or
//! `null`) cell are skipped, and a date survives alignment only when every
//! asset has a bar for it, so the resulting [`AlignedPanel`] is rectangular
//! with no missing entries.

use std::collections::BTreeSet;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// RSI value used for rows where the two-period average is not yet defined.
pub const RSI_NEUTRAL: f64 = 50.0;
/// Smoothing period of the RSI feature.
pub const RSI_PERIOD: usize = 2;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("duplicate date {0} in series")]
    DuplicateDate(NaiveDate),
    #[error("no common trading dates across series: {0}")]
    EmptyIntersection(String),
    #[error("panel needs at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("series `{0}` has no bars")]
    EmptySeries(String),
    #[error("no series given")]
    NoSeries,
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSeries {
    pub ticker: String,
    pub bars: Vec<Bar>,
}

impl AssetSeries {
    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.bars.iter().map(|b| b.date)
    }

    fn date_range(&self) -> String {
        match (self.bars.first(), self.bars.last()) {
            (Some(a), Some(b)) => format!("{}: {}..={}", self.ticker, a.date, b.date),
            _ => format!("{}: empty", self.ticker),
        }
    }
}

/// Result of parsing one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub series: AssetSeries,
    /// Rows dropped because at least one cell was empty.
    pub skipped_rows: usize,
}

fn is_empty_cell(s: &str) -> bool {
    let s = s.trim();
    s.is_empty() || s.eq_ignore_ascii_case("null") || s.eq_ignore_ascii_case("nan")
}

/// Parse one ticker's CSV export.
///
/// `Date` and `Adj Close` are required. Missing `Open/High/Low/Close`
/// columns default to the adjusted close and a missing `Volume` to zero.
pub fn parse_csv(ticker: &str, text: &str) -> Result<ParsedCsv, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = find("Date").ok_or(DataError::MissingColumn("Date"))?;
    let adj_col = find("Adj Close").ok_or(DataError::MissingColumn("Adj Close"))?;
    let optional = [find("Open"), find("High"), find("Low"), find("Close")];
    let volume_col = find("Volume");

    let mut bars = Vec::new();
    let mut skipped = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let width = headers.len();
        if (0..width).any(|i| record.get(i).map(is_empty_cell).unwrap_or(true)) {
            skipped += 1;
            continue;
        }
        let cell = |i: usize| record.get(i).unwrap_or("");
        let number = |i: usize, what: &str| -> Result<f64, DataError> {
            cell(i).parse::<f64>().map_err(|_| DataError::Row {
                line,
                message: format!("cannot parse {what} `{}`", cell(i)),
            })
        };
        let date = NaiveDate::parse_from_str(cell(date_col), "%Y-%m-%d").map_err(|_| {
            DataError::Row { line, message: format!("cannot parse date `{}`", cell(date_col)) }
        })?;
        let adj_close = number(adj_col, "Adj Close")?;
        if !(adj_close > 0.0 && adj_close.is_finite()) {
            return Err(DataError::Row {
                line,
                message: format!("adjusted close must be positive, got {adj_close}"),
            });
        }
        let mut ohlc = [adj_close; 4];
        for (slot, col) in ohlc.iter_mut().zip(optional) {
            if let Some(c) = col {
                *slot = number(c, "price")?;
            }
        }
        let volume = match volume_col {
            Some(c) => number(c, "Volume")?,
            None => 0.0,
        };
        bars.push(Bar {
            date,
            open: ohlc[0],
            high: ohlc[1],
            low: ohlc[2],
            close: ohlc[3],
            adj_close,
            volume,
        });
    }
    bars.sort_by_key(|b| b.date);
    if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(DataError::DuplicateDate(w[0].date));
    }
    Ok(ParsedCsv {
        series: AssetSeries { ticker: ticker.to_string(), bars },
        skipped_rows: skipped,
    })
}

/// Date-aligned adjusted closes and derived features. All matrices are
/// indexed `[t][asset]` and share the shape `T x M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub prices: Vec<Vec<f64>>,
    pub rsi2: Vec<Vec<f64>>,
    pub simple_return: Vec<Vec<f64>>,
    pub log_return: Vec<Vec<f64>>,
    /// Input dates discarded because at least one asset had no bar.
    pub dropped_dates: usize,
}

impl AlignedPanel {
    /// Build a panel straight from a price matrix and fill every feature.
    pub fn from_prices(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        prices: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        let m = tickers.len();
        if m == 0 {
            return Err(DataError::NoSeries);
        }
        if dates.len() != prices.len() {
            return Err(DataError::InvalidPanel("dates and price rows differ in length".into()));
        }
        if dates.len() < 2 {
            return Err(DataError::TooFewRows { needed: 2, got: dates.len() });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidPanel("dates must be strictly increasing".into()));
        }
        for row in &prices {
            if row.len() != m {
                return Err(DataError::InvalidPanel("ragged price row".into()));
            }
            if row.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
                return Err(DataError::InvalidPanel("prices must be positive and finite".into()));
            }
        }
        let t = dates.len();
        let mut panel = AlignedPanel {
            dates,
            tickers,
            prices,
            rsi2: vec![vec![RSI_NEUTRAL; m]; t],
            simple_return: vec![vec![0.0; m]; t],
            log_return: vec![vec![0.0; m]; t],
            dropped_dates: 0,
        };
        compute_returns(&mut panel);
        compute_rsi2(&mut panel);
        Ok(panel)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn assets(&self) -> usize {
        self.tickers.len()
    }

    /// First row index whose date is on or after `date`.
    pub fn index_on_or_after(&self, date: NaiveDate) -> Option<usize> {
        let i = self.dates.partition_point(|d| *d < date);
        (i < self.dates.len()).then_some(i)
    }

    /// Last row index whose date is on or before `date`.
    pub fn index_on_or_before(&self, date: NaiveDate) -> Option<usize> {
        let i = self.dates.partition_point(|d| *d <= date);
        i.checked_sub(1)
    }

    /// Per-asset series carrying only the adjusted closes.
    pub fn to_series(&self) -> Vec<AssetSeries> {
        self.tickers
            .iter()
            .enumerate()
            .map(|(i, ticker)| AssetSeries {
                ticker: ticker.clone(),
                bars: self
                    .dates
                    .iter()
                    .zip(&self.prices)
                    .map(|(&date, row)| {
                        let p = row[i];
                        Bar { date, open: p, high: p, low: p, close: p, adj_close: p, volume: 0.0 }
                    })
                    .collect(),
            })
            .collect()
    }

    /// Price relatives `p[t] / p[t-1]` for row `t >= 1`.
    pub fn relatives(&self, t: usize) -> Vec<f64> {
        self.prices[t].iter().zip(&self.prices[t - 1]).map(|(a, b)| a / b).collect()
    }
}

/// Intersect the series on common dates and compute all features.
pub fn align_panel(series: &[AssetSeries]) -> Result<AlignedPanel, DataError> {
    if series.is_empty() {
        return Err(DataError::NoSeries);
    }
    if let Some(s) = series.iter().find(|s| s.bars.is_empty()) {
        return Err(DataError::EmptySeries(s.ticker.clone()));
    }
    let mut common: BTreeSet<NaiveDate> = series[0].dates().collect();
    let mut union = common.clone();
    for s in &series[1..] {
        let dates: BTreeSet<NaiveDate> = s.dates().collect();
        common = common.intersection(&dates).copied().collect();
        union.extend(dates);
    }
    if common.is_empty() {
        let ranges: Vec<String> = series.iter().map(AssetSeries::date_range).collect();
        return Err(DataError::EmptyIntersection(ranges.join("; ")));
    }
    let dates: Vec<NaiveDate> = common.iter().copied().collect();
    let mut prices = vec![Vec::with_capacity(series.len()); dates.len()];
    for s in series {
        let mut bars = s.bars.iter().filter(|b| common.contains(&b.date));
        for row in prices.iter_mut() {
            // every common date appears exactly once per series
            row.push(bars.next().expect("common date present").adj_close);
        }
    }
    let tickers = series.iter().map(|s| s.ticker.clone()).collect();
    let mut panel = AlignedPanel::from_prices(tickers, dates, prices)?;
    panel.dropped_dates = union.len() - common.len();
    Ok(panel)
}

/// Fill `simple_return` and `log_return`; row 0 is zero.
pub fn compute_returns(panel: &mut AlignedPanel) {
    let m = panel.assets();
    panel.simple_return = vec![vec![0.0; m]; panel.len()];
    panel.log_return = vec![vec![0.0; m]; panel.len()];
    for t in 1..panel.len() {
        for i in 0..m {
            let ratio = panel.prices[t][i] / panel.prices[t - 1][i];
            panel.simple_return[t][i] = ratio - 1.0;
            panel.log_return[t][i] = ratio.ln();
        }
    }
}

/// Fill `rsi2` with Wilder-smoothed two-period RSI.
///
/// The first average covers the changes into rows 1 and 2; afterwards
/// `avg = (avg * (n - 1) + x) / n`. Rows 0 and 1 carry [`RSI_NEUTRAL`], as does
/// any row whose window had no price change at all.
pub fn compute_rsi2(panel: &mut AlignedPanel) {
    let m = panel.assets();
    let n = RSI_PERIOD as f64;
    panel.rsi2 = vec![vec![RSI_NEUTRAL; m]; panel.len()];
    for i in 0..m {
        let mut avg_gain = 0.0;
        let mut avg_loss = 0.0;
        for t in 1..panel.len() {
            let change = panel.prices[t][i] - panel.prices[t - 1][i];
            let (gain, loss) = (change.max(0.0), (-change).max(0.0));
            if t <= RSI_PERIOD {
                avg_gain += gain / n;
                avg_loss += loss / n;
                if t < RSI_PERIOD {
                    continue;
                }
            } else {
                avg_gain = (avg_gain * (n - 1.0) + gain) / n;
                avg_loss = (avg_loss * (n - 1.0) + loss) / n;
            }
            panel.rsi2[t][i] = rsi_from_averages(avg_gain, avg_loss);
        }
    }
}

fn rsi_from_averages(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss == 0.0 {
        if avg_gain == 0.0 {
            RSI_NEUTRAL
        } else {
            100.0
        }
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}

/// Consecutive weekdays starting at `start` (holidays are not modelled).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Deterministic market where asset `i` compounds at `daily_growth[i]` per day.
pub fn drift_market(
    days: usize,
    start_prices: &[f64],
    daily_growth: &[f64],
) -> Result<AlignedPanel, DataError> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let dates = business_days(start, days);
    let mut prices = Vec::with_capacity(days);
    let mut row = start_prices.to_vec();
    for _ in 0..days {
        prices.push(row.clone());
        for (p, g) in row.iter_mut().zip(daily_growth) {
            *p *= 1.0 + g;
        }
    }
    let tickers = (0..start_prices.len()).map(|i| format!("A{i}")).collect();
    AlignedPanel::from_prices(tickers, dates, prices)
}

/// Geometric random walk: each day asset `i` moves by
/// `exp(drift[i] + volatility * z)` with `z` standard normal.
pub fn random_market(
    days: usize,
    start_prices: &[f64],
    drift: &[f64],
    volatility: f64,
    rng: &mut impl rand::Rng,
) -> Result<AlignedPanel, DataError> {
    if drift.len() != start_prices.len() {
        return Err(DataError::InvalidPanel("one drift per asset required".into()));
    }
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let dates = business_days(start, days);
    let mut prices = Vec::with_capacity(days);
    let mut row = start_prices.to_vec();
    for _ in 0..days {
        prices.push(row.clone());
        for (p, g) in row.iter_mut().zip(drift) {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            *p *= (g + volatility * z).exp();
        }
    }
    let tickers = (0..start_prices.len()).map(|i| format!("A{i}")).collect();
    AlignedPanel::from_prices(tickers, dates, prices)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume\n";

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn series(ticker: &str, dates: &[&str], prices: &[f64]) -> AssetSeries {
        AssetSeries {
            ticker: ticker.into(),
            bars: dates
                .iter()
                .zip(prices)
                .map(|(s, &p)| Bar {
                    date: d(s),
                    open: p,
                    high: p,
                    low: p,
                    close: p,
                    adj_close: p,
                    volume: 0.0,
                })
                .collect(),
        }
    }

    fn single_asset(prices: &[f64]) -> AlignedPanel {
        let dates = business_days(d("2020-01-01"), prices.len());
        AlignedPanel::from_prices(vec!["X".into()], dates, prices.iter().map(|&p| vec![p]).collect())
            .unwrap()
    }

    #[test]
    fn parses_single_row() {
        let text = format!("{HEADER}2020-07-01,10,11,9,10.5,10.4,1000\n");
        let parsed = parse_csv("T", &text).unwrap();
        assert_eq!(parsed.series.bars.len(), 1);
        let bar = &parsed.series.bars[0];
        assert_eq!(bar.adj_close, 10.4);
        assert_eq!(bar.close, 10.5);
        assert_eq!(bar.volume, 1000.0);
        assert_eq!(bar.date, d("2020-07-01"));
    }

    #[test]
    fn header_only_is_empty() {
        let parsed = parse_csv("T", HEADER).unwrap();
        assert!(parsed.series.bars.is_empty());
        assert_eq!(parsed.skipped_rows, 0);
    }

    #[test]
    fn empty_cell_skips_row() {
        let text = format!("{HEADER}2020-07-01,10,11,9,10.5,,1000\n2020-07-02,10,11,9,10.5,10.6,1000\n");
        let parsed = parse_csv("T", &text).unwrap();
        assert_eq!(parsed.skipped_rows, 1);
        assert_eq!(parsed.series.bars.len(), 1);
        let text = format!("{HEADER}2020-07-01,null,null,null,null,null,null\n");
        assert_eq!(parse_csv("T", &text).unwrap().skipped_rows, 1);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = parse_csv("T", "Date,Close\n2020-01-01,1\n").unwrap_err();
        assert!(matches!(err, DataError::MissingColumn("Adj Close")));
    }

    #[test]
    fn bad_number_reports_line() {
        let text = format!("{HEADER}2020-07-01,10,11,9,10.5,10.4,1000\n2020-07-02,10,11,9,10.5,abc,1000\n");
        match parse_csv("T", &text).unwrap_err() {
            DataError::Row { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
        let text = format!("{HEADER}07/01/2020,10,11,9,10.5,10.4,1000\n");
        assert!(matches!(parse_csv("T", &text), Err(DataError::Row { line: 2, .. })));
    }

    #[test]
    fn unsorted_rows_are_sorted_and_duplicates_rejected() {
        let text = format!("{HEADER}2020-07-02,1,1,1,1,2,0\n2020-07-01,1,1,1,1,1,0\n");
        let s = parse_csv("T", &text).unwrap().series;
        assert_eq!(s.bars[0].date, d("2020-07-01"));
        let text = format!("{HEADER}2020-07-01,1,1,1,1,2,0\n2020-07-01,1,1,1,1,1,0\n");
        assert!(matches!(parse_csv("T", &text), Err(DataError::DuplicateDate(_))));
    }

    #[test]
    fn identical_dates_align() {
        let days = ["2020-01-01", "2020-01-02", "2020-01-03"];
        let p = align_panel(&[series("A", &days, &[1.0, 2.0, 3.0]), series("B", &days, &[4.0, 5.0, 6.0])])
            .unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.prices[2], vec![3.0, 6.0]);
        assert_eq!(p.dropped_dates, 0);
    }

    #[test]
    fn partial_overlap_intersects() {
        let a = series("A", &["2020-01-01", "2020-01-02", "2020-01-03"], &[1.0, 2.0, 3.0]);
        let b = series("B", &["2020-01-02", "2020-01-03", "2020-01-04"], &[4.0, 5.0, 6.0]);
        let p = align_panel(&[a, b]).unwrap();
        assert_eq!(p.dates, vec![d("2020-01-02"), d("2020-01-03")]);
        assert_eq!(p.prices, vec![vec![2.0, 4.0], vec![3.0, 5.0]]);
        assert_eq!(p.dropped_dates, 2);
    }

    #[test]
    fn disjoint_dates_fail() {
        let a = series("A", &["2020-01-01", "2020-01-02"], &[1.0, 2.0]);
        let b = series("B", &["2021-01-01", "2021-01-02"], &[1.0, 2.0]);
        match align_panel(&[a, b]).unwrap_err() {
            DataError::EmptyIntersection(msg) => {
                assert!(msg.contains("A: 2020-01-01..=2020-01-02"));
                assert!(msg.contains("B: 2021-01-01"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn returns_closed_form() {
        let p = single_asset(&[100.0, 110.0, 110.0, 55.0]);
        assert_eq!(p.simple_return[0][0], 0.0);
        assert_eq!(p.log_return[0][0], 0.0);
        assert!((p.simple_return[1][0] - 0.10).abs() < 1e-15);
        assert!((p.log_return[1][0] - 0.0953101798043249).abs() < 1e-15);
        assert_eq!(p.simple_return[2][0], 0.0);
        assert_eq!(p.log_return[2][0], 0.0);
        assert_eq!(p.simple_return[3][0], -0.5);
        assert!((p.log_return[3][0] + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn rsi_monotone_extremes() {
        let up = single_asset(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let down = single_asset(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        for t in 0..2 {
            assert_eq!(up.rsi2[t][0], RSI_NEUTRAL);
        }
        for t in 2..5 {
            assert_eq!(up.rsi2[t][0], 100.0);
            assert_eq!(down.rsi2[t][0], 0.0);
        }
    }

    #[test]
    fn rsi_matches_hand_stepped_wilder() {
        // Changes +1, -0.5, +0.7.
        // t=2: gain avg (1+0)/2 = 0.5, loss avg (0+0.5)/2 = 0.25, RS 2 -> 66.666..
        // t=3: gain (0.5*1+0.7)/2 = 0.6, loss (0.25*1+0)/2 = 0.125, RS 4.8 -> 82.7586..
        let p = single_asset(&[10.0, 11.0, 10.5, 11.2]);
        assert_eq!(p.rsi2[0][0], 50.0);
        assert_eq!(p.rsi2[1][0], 50.0);
        assert!((p.rsi2[2][0] - (100.0 - 100.0 / 3.0)).abs() < 1e-9);
        assert!((p.rsi2[3][0] - (100.0 - 100.0 / 5.8)).abs() < 1e-9);
    }

    #[test]
    fn rsi_flat_window_is_neutral() {
        let p = single_asset(&[3.0, 3.0, 3.0]);
        assert_eq!(p.rsi2[2][0], RSI_NEUTRAL);
    }

    #[test]
    fn index_lookup() {
        let p = single_asset(&[1.0, 2.0, 3.0]);
        assert_eq!(p.index_on_or_after(d("2019-01-01")), Some(0));
        assert_eq!(p.index_on_or_after(d("2030-01-01")), None);
        assert_eq!(p.index_on_or_before(d("2019-01-01")), None);
        assert_eq!(p.index_on_or_before(p.dates[1]), Some(1));
    }

    #[test]
    fn business_days_skip_weekends() {
        let days = business_days(d("2021-01-01"), 3); // Friday
        assert_eq!(days, vec![d("2021-01-01"), d("2021-01-04"), d("2021-01-05")]);
    }
}
