//! Daily-rebalancing portfolio simulator.
//!
//! Holdings are whole shares, trades execute at the day's adjusted close with
//! no slippage or market impact, and an optional flat fee is charged per share
//! traded. Rebalancing to weights `w` buys `floor(V * w_i / p_i)` shares of
//! each asset; whatever is left over stays in cash.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::AlignedPanel;

/// Tolerance on `sum(w) == 1` for portfolio weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("start index {start} outside 1..={max}")]
    StartOutOfRange { start: usize, max: usize },
    #[error("end index {end} must be in {start}+1..{len}")]
    EndOutOfRange { start: usize, end: usize, len: usize },
    #[error("episode already finished at index {0}")]
    PastEnd(usize),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub initial_cash: f64,
    pub cost_per_share: f64,
    pub cost_enabled: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { initial_cash: 1_000_000.0, cost_per_share: 0.001, cost_enabled: true }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.initial_cash > 0.0 && self.initial_cash.is_finite()) {
            return Err(EnvError::InvalidConfig("initial_cash must be positive".into()));
        }
        if !(self.cost_per_share >= 0.0 && self.cost_per_share.is_finite()) {
            return Err(EnvError::InvalidConfig("cost_per_share must be non-negative".into()));
        }
        Ok(())
    }

    fn fee(&self) -> f64 {
        if self.cost_enabled {
            self.cost_per_share
        } else {
            0.0
        }
    }
}

/// Portfolio weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionWeights(Vec<f64>);

impl ActionWeights {
    pub fn new(w: Vec<f64>) -> Result<Self, EnvError> {
        if w.is_empty() {
            return Err(EnvError::InvalidAction("empty weight vector".into()));
        }
        if let Some(x) = w.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(EnvError::InvalidAction(format!("weight {x} outside [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(EnvError::InvalidAction(format!("weights sum to {sum}")));
        }
        Ok(Self(w))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub holdings: Vec<u64>,
    pub cash: f64,
    pub value: f64,
    pub t: usize,
}

/// Flattened state vector: for each asset `(p_t, p_{t-1}, ln(p_t/p_{t-1}),
/// RSI2_t, h_t)`, then `V_t` and `c_t`. Length `5M + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(Vec<f64>);

pub const FEATURES_PER_ASSET: usize = 5;

impl Observation {
    pub fn dim(assets: usize) -> usize {
        FEATURES_PER_ASSET * assets + 2
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn assets(&self) -> usize {
        (self.0.len() - 2) / FEATURES_PER_ASSET
    }

    pub fn price(&self, i: usize) -> f64 {
        self.0[FEATURES_PER_ASSET * i]
    }

    pub fn prev_price(&self, i: usize) -> f64 {
        self.0[FEATURES_PER_ASSET * i + 1]
    }

    pub fn log_return(&self, i: usize) -> f64 {
        self.0[FEATURES_PER_ASSET * i + 2]
    }

    pub fn rsi2(&self, i: usize) -> f64 {
        self.0[FEATURES_PER_ASSET * i + 3]
    }

    pub fn holdings(&self, i: usize) -> f64 {
        self.0[FEATURES_PER_ASSET * i + 4]
    }

    pub fn value(&self) -> f64 {
        self.0[self.0.len() - 2]
    }

    pub fn cash(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub cost_paid: f64,
}

/// `sum(h_i * p_i) + cash`, summed in asset order.
pub fn mark_to_market(holdings: &[u64], prices: &[f64], cash: f64) -> f64 {
    let invested: f64 = holdings.iter().zip(prices).map(|(&h, &p)| h as f64 * p).sum();
    invested + cash
}

fn turnover(new: &[u64], old: &[u64]) -> u64 {
    new.iter().zip(old).map(|(&a, &b)| a.abs_diff(b)).sum()
}

fn target_holdings(investable: f64, weights: &[f64], prices: &[f64]) -> Vec<u64> {
    weights
        .iter()
        .zip(prices)
        .map(|(&w, &p)| (investable * w / p).floor().max(0.0) as u64)
        .collect()
}

/// Rebalance `state` to `weights` at `prices`. Returns the new state (same
/// `t`) and the fee paid.
///
/// With fees on, targets are computed from the full value, the implied fee
/// is deducted and the targets recomputed once. If rounding still leaves
/// cash negative, single shares are shed from the largest position until
/// the account is solvent.
pub fn rebalance(
    state: &PortfolioState,
    weights: &ActionWeights,
    prices: &[f64],
    config: &EnvConfig,
) -> Result<(PortfolioState, f64), EnvError> {
    let m = state.holdings.len();
    if weights.len() != m || prices.len() != m {
        return Err(EnvError::InvalidAction(format!(
            "expected {m} weights and prices, got {} and {}",
            weights.len(),
            prices.len()
        )));
    }
    let fee = config.fee();
    let w = weights.as_slice();
    let value = mark_to_market(&state.holdings, prices, state.cash);
    let mut holdings = target_holdings(value, w, prices);
    let first_cost = fee * turnover(&holdings, &state.holdings) as f64;
    if first_cost > 0.0 {
        holdings = target_holdings(value - first_cost, w, prices);
    }
    let settle = |h: &[u64]| {
        let cost = fee * turnover(h, &state.holdings) as f64;
        let invested: f64 = h.iter().zip(prices).map(|(&h, &p)| h as f64 * p).sum();
        (value - invested - cost, cost)
    };
    let (mut cash, mut cost) = settle(&holdings);
    while cash < 0.0 {
        let Some(i) = (0..m)
            .filter(|&i| holdings[i] > 0)
            .max_by(|&a, &b| {
                (holdings[a] as f64 * prices[a]).total_cmp(&(holdings[b] as f64 * prices[b]))
            })
        else {
            break;
        };
        holdings[i] -= 1;
        (cash, cost) = settle(&holdings);
    }
    let value = mark_to_market(&holdings, prices, cash);
    Ok((PortfolioState { holdings, cash, value, t: state.t }, cost))
}

/// One episode over `panel[start..=end]`.
#[derive(Debug, Clone)]
pub struct MarketEnv<'a> {
    panel: &'a AlignedPanel,
    config: EnvConfig,
    state: PortfolioState,
    start: usize,
    end: usize,
}

impl<'a> MarketEnv<'a> {
    /// Episode from `start` to the last panel row.
    pub fn new(panel: &'a AlignedPanel, config: EnvConfig, start: usize) -> Result<Self, EnvError> {
        Self::with_range(panel, config, start, panel.len().saturating_sub(1))
    }

    pub fn with_range(
        panel: &'a AlignedPanel,
        config: EnvConfig,
        start: usize,
        end: usize,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        let len = panel.len();
        if start < 1 || start + 2 > len {
            return Err(EnvError::StartOutOfRange { start, max: len.saturating_sub(2) });
        }
        if end <= start || end >= len {
            return Err(EnvError::EndOutOfRange { start, end, len });
        }
        let state = Self::initial_state(panel.assets(), &config, start);
        Ok(Self { panel, config, state, start, end })
    }

    fn initial_state(m: usize, config: &EnvConfig, t: usize) -> PortfolioState {
        PortfolioState { holdings: vec![0; m], cash: config.initial_cash, value: config.initial_cash, t }
    }

    /// Back to an all-cash portfolio at the episode start.
    pub fn reset(&mut self) -> Observation {
        self.state = Self::initial_state(self.panel.assets(), &self.config, self.start);
        self.observation()
    }

    pub fn state(&self) -> &PortfolioState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn panel(&self) -> &'a AlignedPanel {
        self.panel
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.end
    }

    pub fn observation(&self) -> Observation {
        observe(self.panel, &self.state)
    }

    /// Rebalance at today's close to `action`, then move to the next day.
    pub fn step(&mut self, action: &ActionWeights) -> Result<StepResult, EnvError> {
        self.advance(Some(action))
    }

    /// Move to the next day without trading.
    pub fn hold(&mut self) -> Result<StepResult, EnvError> {
        self.advance(None)
    }

    fn advance(&mut self, action: Option<&ActionWeights>) -> Result<StepResult, EnvError> {
        let t = self.state.t;
        if t >= self.end {
            return Err(EnvError::PastEnd(t));
        }
        let value_before = self.state.value;
        let (traded, cost_paid) = match action {
            Some(w) => rebalance(&self.state, w, &self.panel.prices[t], &self.config)?,
            None => (self.state.clone(), 0.0),
        };
        let next_prices = &self.panel.prices[t + 1];
        let value = mark_to_market(&traded.holdings, next_prices, traded.cash);
        self.state = PortfolioState { holdings: traded.holdings, cash: traded.cash, value, t: t + 1 };
        Ok(StepResult {
            next_obs: self.observation(),
            reward: value - value_before,
            done: t + 1 == self.end,
            cost_paid,
        })
    }
}

/// Build the observation for `state.t` (requires `t >= 1`).
pub fn observe(panel: &AlignedPanel, state: &PortfolioState) -> Observation {
    let t = state.t;
    let m = panel.assets();
    let mut v = Vec::with_capacity(Observation::dim(m));
    for i in 0..m {
        v.extend_from_slice(&[
            panel.prices[t][i],
            panel.prices[t - 1][i],
            panel.log_return[t][i],
            panel.rsi2[t][i],
            state.holdings[i] as f64,
        ]);
    }
    v.push(state.value);
    v.push(state.cash);
    Observation(v)
}
