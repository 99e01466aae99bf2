//! Classical online portfolio-selection rules, run through the same market
//! environment as the learned agent.
//!
//! Every strategy starts from the uniform portfolio and thereafter updates
//! its own previously issued weights using the day's price relatives
//! `x_i = p_t,i / p_t-1,i`.

mod anticor;
mod universal;

pub use anticor::anticor_update;
pub use universal::{up_weights, UniversalPortfolio};

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestError, Decision, MarketView, Policy};
use crate::env::ActionWeights;

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deviations from the mean and their squared norm.
fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm2 = d.iter().map(|v| v * v).sum();
    (d, norm2)
}

/// Exponentiated gradient: `w_i <- w_i exp(eta x_i / (w . x))`, renormalised.
pub fn eg_update(w: &[f64], x: &[f64], eta: f64) -> Vec<f64> {
    let wx = dot(w, x);
    let raw: Vec<f64> = w.iter().zip(x).map(|(wi, xi)| wi * (eta * xi / wx).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|r| r / s).collect()
}

/// Moving-average reversion. `prices` holds the recent rows, today last;
/// the predicted relative is `mean(p) / p_today`.
pub fn olmar_update(w: &[f64], prices: &[Vec<f64>], epsilon: f64) -> Vec<f64> {
    let today = prices.last().expect("at least one price row");
    let n = prices.len() as f64;
    let predicted: Vec<f64> =
        (0..w.len()).map(|i| prices.iter().map(|row| row[i]).sum::<f64>() / n / today[i]).collect();
    let margin = dot(w, &predicted);
    if margin >= epsilon {
        return w.to_vec();
    }
    let (d, norm2) = centered(&predicted);
    if norm2 == 0.0 {
        return w.to_vec();
    }
    let lambda = (epsilon - margin) / norm2;
    simplex_project(&w.iter().zip(&d).map(|(wi, di)| wi + lambda * di).collect::<Vec<_>>())
}

/// Passive-aggressive mean reversion.
pub fn pamr_update(w: &[f64], x: &[f64], epsilon: f64) -> Vec<f64> {
    let loss = (dot(w, x) - epsilon).max(0.0);
    let (d, norm2) = centered(x);
    if loss == 0.0 || norm2 == 0.0 {
        return w.to_vec();
    }
    let tau = loss / norm2;
    simplex_project(&w.iter().zip(&d).map(|(wi, di)| wi - tau * di).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StrategyKind {
    Anticor,
    Bah,
    Crp,
    Eg,
    Olmar,
    Pamr,
    Up,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [Self::Anticor, Self::Bah, Self::Crp, Self::Eg, Self::Olmar, Self::Pamr, Self::Up];

    pub fn label(self) -> &'static str {
        match self {
            Self::Anticor => "ANTICOR",
            Self::Bah => "BAH",
            Self::Crp => "CRP",
            Self::Eg => "EG",
            Self::Olmar => "OLMAR",
            Self::Pamr => "PAMR",
            Self::Up => "UP",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgConfig {
    pub eta: f64,
}

impl Default for EgConfig {
    fn default() -> Self {
        Self { eta: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlmarConfig {
    pub epsilon: f64,
    pub window: usize,
}

impl Default for OlmarConfig {
    fn default() -> Self {
        Self { epsilon: 10.0, window: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PamrConfig {
    pub epsilon: f64,
}

impl Default for PamrConfig {
    fn default() -> Self {
        Self { epsilon: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpConfig {
    pub samples: usize,
}

impl Default for UpConfig {
    fn default() -> Self {
        Self { samples: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnticorConfig {
    pub window: usize,
}

impl Default for AnticorConfig {
    fn default() -> Self {
        Self { window: 5 }
    }
}

/// Hyperparameters for every baseline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub eg: EgConfig,
    pub olmar: OlmarConfig,
    pub pamr: PamrConfig,
    pub up: UpConfig,
    pub anticor: AnticorConfig,
}

/// Any baseline as a [`Policy`].
pub struct Strategy {
    kind: StrategyKind,
    config: BaselineConfig,
    weights: Option<Vec<f64>>,
    up: Option<UniversalPortfolio>,
    up_rng: ChaCha8Rng,
}

impl Strategy {
    /// `rng` seeds the universal portfolio's sampled CRPs; other kinds
    /// ignore it.
    pub fn new(kind: StrategyKind, config: BaselineConfig, rng: ChaCha8Rng) -> Self {
        Self { kind, config, weights: None, up: None, up_rng: rng }
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    /// Last issued weights.
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn next_weights(&mut self, w: &[f64], view: &MarketView<'_>) -> Vec<f64> {
        let x = view.relatives();
        match self.kind {
            StrategyKind::Bah | StrategyKind::Crp => vec![1.0 / w.len() as f64; w.len()],
            StrategyKind::Eg => eg_update(w, &x, self.config.eg.eta),
            StrategyKind::Pamr => pamr_update(w, &x, self.config.pamr.epsilon),
            StrategyKind::Olmar => {
                olmar_update(w, view.price_window(self.config.olmar.window.max(1)), self.config.olmar.epsilon)
            }
            StrategyKind::Anticor => {
                let window = self.config.anticor.window;
                let t = view.t();
                // log relatives need a previous row, so at most `t` are available
                let days = (2 * window).min(t);
                let log_rel: Vec<Vec<f64>> = ((t + 1 - days)..=t).map(|s| view.panel.log_return[s].clone()).collect();
                anticor_update(w, &log_rel, window)
            }
            StrategyKind::Up => {
                let up = self.up.as_mut().expect("initialised on the first decision");
                up.observe(&x);
                up.weights()
            }
        }
    }
}

impl Policy for Strategy {
    fn name(&self) -> &str {
        self.kind.label()
    }

    fn reset(&mut self) {
        self.weights = None;
        self.up = None;
    }

    fn decide(&mut self, view: &MarketView<'_>) -> Result<Decision, BacktestError> {
        let m = view.panel.assets();
        let next = match self.weights.take() {
            None => {
                if self.kind == StrategyKind::Up {
                    self.up = Some(UniversalPortfolio::new(m, self.config.up.samples, &mut self.up_rng));
                }
                vec![1.0 / m as f64; m]
            }
            Some(_) if self.kind == StrategyKind::Bah => {
                self.weights = Some(vec![1.0 / m as f64; m]);
                return Ok(Decision::Hold);
            }
            Some(w) => self.next_weights(&w, view),
        };
        let action = ActionWeights::new(next.clone()).map_err(|e| BacktestError::Policy(format!("{}: {e}", self.kind)))?;
        self.weights = Some(next);
        Ok(Decision::Rebalance(action))
    }
}
