//! Rolling a decision rule through the market environment.

use thiserror::Error;

use crate::agent::{AgentError, DdpgAgent};
use crate::data::AlignedPanel;
use crate::env::{observe, ActionWeights, EnvConfig, EnvError, MarketEnv, PortfolioState};
use crate::metrics::{EquityCurve, MetricError};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Policy(String),
}

/// What to do at today's close.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Rebalance(ActionWeights),
    /// Keep the current shares; no trade and no cost.
    Hold,
}

/// What a policy may look at when deciding on day `t`: the panel up to and
/// including row `t`, and the current portfolio.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    pub panel: &'a AlignedPanel,
    pub state: &'a PortfolioState,
    /// First row of the run.
    pub start: usize,
}

impl MarketView<'_> {
    pub fn t(&self) -> usize {
        self.state.t
    }

    /// Price relatives `p_t / p_{t-1}` for today.
    pub fn relatives(&self) -> Vec<f64> {
        self.panel.relatives(self.state.t)
    }

    /// Rows `from..=t` of the price matrix, clamped to the panel start.
    pub fn price_window(&self, days: usize) -> &[Vec<f64>] {
        let t = self.state.t;
        &self.panel.prices[(t + 1).saturating_sub(days)..=t]
    }
}

pub trait Policy {
    fn name(&self) -> &str;

    /// Called once before the first decision of a run.
    fn reset(&mut self) {}

    fn decide(&mut self, view: &MarketView<'_>) -> Result<Decision, BacktestError>;
}

/// Outcome of one run over `start..=end`.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRun {
    pub name: String,
    /// Value at every row of the run, starting with the initial cash.
    pub curve: EquityCurve,
    pub total_cost: f64,
    /// Issued weights per decision day; `None` where the policy held.
    pub weights: Vec<Option<Vec<f64>>>,
}

impl BacktestRun {
    /// Average weight on asset `i` over the days the policy traded.
    pub fn mean_weight(&self, i: usize) -> Option<f64> {
        let issued: Vec<f64> = self.weights.iter().flatten().map(|w| w[i]).collect();
        (!issued.is_empty()).then(|| issued.iter().sum::<f64>() / issued.len() as f64)
    }

    pub fn final_value(&self) -> f64 {
        *self.curve.values.last().expect("curves have at least two points")
    }
}

/// Run `policy` from an all-cash portfolio at row `start` to row `end`.
pub fn run_policy(
    panel: &AlignedPanel,
    env_config: &EnvConfig,
    start: usize,
    end: usize,
    policy: &mut dyn Policy,
) -> Result<BacktestRun, BacktestError> {
    let mut env = MarketEnv::with_range(panel, env_config.clone(), start, end)?;
    env.reset();
    policy.reset();
    let mut values = vec![env.state().value];
    let mut weights = Vec::with_capacity(end - start);
    let mut total_cost = 0.0;
    loop {
        let view = MarketView { panel, state: env.state(), start };
        let decision = policy.decide(&view)?;
        let result = match decision {
            Decision::Rebalance(w) => {
                let r = env.step(&w)?;
                weights.push(Some(w.into_inner()));
                r
            }
            Decision::Hold => {
                weights.push(None);
                env.hold()?
            }
        };
        total_cost += result.cost_paid;
        values.push(env.state().value);
        if result.done {
            break;
        }
    }
    let curve = EquityCurve::new(panel.dates[start..=end].to_vec(), values)?;
    Ok(BacktestRun { name: policy.name().to_string(), curve, total_cost, weights })
}

/// Greedy (noise-free) actor.
pub struct AgentPolicy<'a> {
    pub agent: &'a DdpgAgent,
    pub name: String,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(agent: &'a DdpgAgent) -> Self {
        Self { agent, name: "DDPG".into() }
    }
}

impl Policy for AgentPolicy<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, view: &MarketView<'_>) -> Result<Decision, BacktestError> {
        if self.agent.tickers != view.panel.tickers {
            return Err(BacktestError::Agent(AgentError::Mismatch(format!(
                "agent trained on {:?}, panel has {:?}",
                self.agent.tickers, view.panel.tickers
            ))));
        }
        let obs = observe(view.panel, view.state);
        Ok(Decision::Rebalance(self.agent.act(&obs)?))
    }
}

/// Policy that replays a fixed list of weights, cycling when it runs out.
pub struct ScriptedPolicy {
    pub name: String,
    pub script: Vec<ActionWeights>,
    next: usize,
}

impl ScriptedPolicy {
    pub fn new(name: &str, script: Vec<ActionWeights>) -> Self {
        Self { name: name.into(), script, next: 0 }
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self) {
        self.next = 0;
    }

    fn decide(&mut self, _: &MarketView<'_>) -> Result<Decision, BacktestError> {
        if self.script.is_empty() {
            return Err(BacktestError::Policy("empty script".into()));
        }
        let w = self.script[self.next % self.script.len()].clone();
        self.next += 1;
        Ok(Decision::Rebalance(w))
    }
}
