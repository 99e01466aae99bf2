//! Four-network DDPG learner: a fully connected actor, an LSTM critic over
//! `[state, action]`, and slowly tracking target copies of both.

mod nets;
mod noise;
mod replay;
mod train;

pub use nets::{normalize_weights, normalize_weights_backward, ActorCache, ActorNet, CriticCache, CriticNet};
pub use noise::{EpsilonSchedule, OuConfig, OuNoise};
pub use replay::{ReplayBuffer, Transition};
pub use train::{train, LogRow, TrainingLog};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionWeights, EnvError, Observation, FEATURES_PER_ASSET};
use crate::neural::{huber_loss, soft_update, Adam, AdamConfig, Matrix, NeuralError, ParamFile, Parameters};
use crate::util::SeedStream;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
}

/// How raw observations are turned into network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputScaling {
    /// Feed the observation vector unchanged.
    Raw,
    /// Prices relative to a reference price, log returns x100, RSI / 100,
    /// holdings as a fraction of portfolio value, value relative to the
    /// starting capital and cash as a fraction of value.
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub epsilon: EpsilonSchedule,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub ou: OuConfig,
    /// Run one learning update every `train_every` environment steps.
    pub train_every: usize,
    /// Multiplier applied to rewards before they enter the replay buffer.
    pub reward_scale: f64,
    /// Number of consecutive `[state, action]` steps the critic sees.
    pub critic_window: usize,
    pub dropout: f64,
    pub huber_delta: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_lstm_hidden: usize,
    pub critic_fc_hidden: usize,
    pub input_scaling: InputScaling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.09,
            batch_size: 128,
            epsilon: EpsilonSchedule::default(),
            buffer_capacity: 100_000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            epochs: 50,
            seed: 0,
            ou: OuConfig::default(),
            train_every: 1,
            reward_scale: 1.0,
            critic_window: 1,
            dropout: 0.35,
            huber_delta: 1.0,
            actor_hidden: vec![256, 128, 64],
            critic_lstm_hidden: 100,
            critic_fc_hidden: 50,
            input_scaling: InputScaling::Scaled,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail("tau must be in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return fail("batch_size must be positive and not exceed buffer_capacity");
        }
        if !self.epsilon.is_valid() {
            return fail("epsilon schedule needs one more value than thresholds, all in [0, 1]");
        }
        if self.train_every == 0 || self.critic_window == 0 {
            return fail("train_every and critic_window must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        if self.actor_lr <= 0.0 || self.critic_lr <= 0.0 {
            return fail("learning rates must be positive");
        }
        Ok(())
    }
}

/// Observation-to-input transform, with the references it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub mode: InputScaling,
    pub price_ref: Vec<f64>,
    pub value_ref: f64,
}

impl InputScaler {
    pub fn new(mode: InputScaling, price_ref: Vec<f64>, value_ref: f64) -> Self {
        Self { mode, price_ref, value_ref }
    }

    pub fn transform_into(&self, obs: &Observation, out: &mut [f64]) {
        let raw = obs.as_slice();
        match self.mode {
            InputScaling::Raw => out.copy_from_slice(raw),
            InputScaling::Scaled => {
                let m = obs.assets();
                let value = obs.value();
                for i in 0..m {
                    let r = self.price_ref[i];
                    let o = &mut out[FEATURES_PER_ASSET * i..FEATURES_PER_ASSET * (i + 1)];
                    o[0] = obs.price(i) / r;
                    o[1] = obs.prev_price(i) / r;
                    o[2] = 100.0 * obs.log_return(i);
                    o[3] = obs.rsi2(i) / 100.0;
                    o[4] = obs.holdings(i) * obs.price(i) / value;
                }
                out[FEATURES_PER_ASSET * m] = value / self.value_ref;
                out[FEATURES_PER_ASSET * m + 1] = obs.cash() / value;
            }
        }
    }

    pub fn transform(&self, obs: &Observation) -> Vec<f64> {
        let mut v = vec![0.0; obs.len()];
        self.transform_into(obs, &mut v);
        v
    }

    /// Scaled inputs for a batch of observations, one row each.
    pub fn batch<'a>(&self, obs: impl ExactSizeIterator<Item = &'a Observation>) -> Matrix {
        let rows = obs.len();
        let mut it = obs.peekable();
        let dim = it.peek().map_or(0, |o| o.len());
        let mut m = Matrix::zeros(rows, dim);
        for (r, o) in it.enumerate() {
            self.transform_into(o, m.row_mut(r));
        }
        m
    }
}

/// Lagged copies of the online networks.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPair {
    pub actor: ActorNet,
    pub critic: CriticNet,
}

/// The learner: online and target networks, their optimisers and the input
/// scaler.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub config: TrainConfig,
    pub tickers: Vec<String>,
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub target: TargetPair,
    pub scaler: InputScaler,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl DdpgAgent {
    /// Fresh networks for `tickers.len()` assets. The scaler references are
    /// the prices of the first training row and the starting capital.
    pub fn new(
        config: TrainConfig,
        tickers: Vec<String>,
        price_ref: Vec<f64>,
        value_ref: f64,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let m = tickers.len();
        if price_ref.len() != m || m == 0 {
            return Err(AgentError::Config("reference prices must match the asset count".into()));
        }
        let state_dim = Observation::dim(m);
        let mut rng = SeedStream::new(config.seed).rng("init");
        let actor = ActorNet::new(state_dim, &config.actor_hidden, m, &mut rng);
        let critic = CriticNet::new(
            state_dim + m,
            config.critic_lstm_hidden,
            config.critic_fc_hidden,
            config.dropout,
            &mut rng,
        );
        let adam = |lr| AdamConfig { lr, beta1: config.adam_beta1, beta2: config.adam_beta2, eps: 1e-8 };
        Ok(Self {
            target: TargetPair { actor: actor.clone(), critic: critic.clone() },
            actor_opt: Adam::new(adam(config.actor_lr)),
            critic_opt: Adam::new(adam(config.critic_lr)),
            scaler: InputScaler::new(config.input_scaling, price_ref, value_ref),
            actor,
            critic,
            tickers,
            config,
        })
    }

    pub fn assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn state_dim(&self) -> usize {
        Observation::dim(self.assets())
    }

    fn check_obs(&self, obs: &Observation) -> Result<(), AgentError> {
        if obs.len() != self.state_dim() {
            return Err(AgentError::Mismatch(format!(
                "observation has {} entries, actor expects {}",
                obs.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    /// Sigmoid outputs of the online actor for one observation.
    pub fn raw_action(&self, obs: &Observation) -> Result<Vec<f64>, AgentError> {
        self.check_obs(obs)?;
        let x = Matrix::from_vec(1, obs.len(), self.scaler.transform(obs))?;
        Ok(self.actor.forward(&x)?.0.data)
    }

    /// Deterministic policy: normalised actor output.
    pub fn act(&self, obs: &Observation) -> Result<ActionWeights, AgentError> {
        Ok(ActionWeights::new(normalize_weights(&self.raw_action(obs)?))?)
    }

    /// Exploration policy. With probability `epsilon` (a draw `r <= epsilon`)
    /// OU noise is added to the raw output and clamped to `[0, 1]` before
    /// normalising. Returns the weights and whether noise was applied.
    pub fn act_explore(
        &self,
        obs: &Observation,
        epsilon: f64,
        noise: &mut OuNoise,
        gate_rng: &mut impl Rng,
        noise_rng: &mut impl Rng,
    ) -> Result<(ActionWeights, bool), AgentError> {
        let mut raw = self.raw_action(obs)?;
        let explore = gate_rng.random::<f64>() <= epsilon;
        if explore {
            for (r, n) in raw.iter_mut().zip(noise.sample(noise_rng)) {
                *r = (*r + n).clamp(0.0, 1.0);
            }
        }
        Ok((ActionWeights::new(normalize_weights(&raw))?, explore))
    }

    /// Critic input sequence for a batch: one `[state, action]` matrix per
    /// step, the earlier steps taken from `contexts` and the final step from
    /// `last_states` / `last_actions`.
    fn critic_sequence(
        &self,
        contexts: &[Vec<(&Observation, &[f64])>],
        last_states: &Matrix,
        last_actions: &Matrix,
    ) -> Result<Vec<Matrix>, AgentError> {
        let window = self.config.critic_window;
        let mut seq = Vec::with_capacity(window);
        for k in 0..window - 1 {
            let states = self.scaler.batch(contexts.iter().map(|c| c[k].0));
            let mut actions = Matrix::zeros(contexts.len(), self.assets());
            for (r, c) in contexts.iter().enumerate() {
                actions.row_mut(r).copy_from_slice(c[k].1);
            }
            seq.push(Matrix::hstack(&states, &actions)?);
        }
        seq.push(Matrix::hstack(last_states, last_actions)?);
        Ok(seq)
    }

    /// Bootstrapped targets `r + γ Q'(s', A'(s'))`, or `r` for terminal steps.
    pub fn critic_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>, AgentError> {
        let window = self.config.critic_window;
        let next = self.scaler.batch(batch.iter().map(|t| &t.next_state));
        let (raw, _) = self.target.actor.forward(&next)?;
        let actions = normalized_rows(&raw);
        let contexts: Vec<_> = batch.iter().map(|t| window_pairs(t, window, true)).collect();
        let seq = self.critic_sequence(&contexts, &next, &actions)?;
        // evaluation mode never draws from the rng
        let mut unused = SeedStream::new(0).rng("unused");
        let (q, _) = self.target.critic.forward(&seq, false, &mut unused)?;
        Ok(batch
            .iter()
            .zip(&q.data)
            .map(|(t, &q)| if t.done { t.reward } else { t.reward + self.config.gamma * q })
            .collect())
    }

    fn check_batch(&self, batch: &[&Transition]) -> Result<(), AgentError> {
        if batch.is_empty() {
            return Err(AgentError::InsufficientData("empty minibatch".into()));
        }
        for t in batch {
            self.check_obs(&t.state)?;
            self.check_obs(&t.next_state)?;
            if t.action.len() != self.assets() {
                return Err(AgentError::Mismatch("stored action has wrong length".into()));
            }
            if t.context.len() + 1 < self.config.critic_window {
                return Err(AgentError::Mismatch("transition context shorter than critic window".into()));
            }
        }
        Ok(())
    }

    /// One Huber-loss step on the online critic. Returns the loss before
    /// the step.
    pub fn update_critic(&mut self, batch: &[&Transition], dropout_rng: &mut ChaCha8Rng) -> Result<f64, AgentError> {
        self.check_batch(batch)?;
        let targets = self.critic_targets(batch)?;
        let states = self.scaler.batch(batch.iter().map(|t| &t.state));
        let actions = Matrix::from_rows(&batch.iter().map(|t| t.action.clone()).collect::<Vec<_>>())?;
        let contexts: Vec<_> = batch.iter().map(|t| window_pairs(t, self.config.critic_window, false)).collect();
        let seq = self.critic_sequence(&contexts, &states, &actions)?;
        let (q, cache) = self.critic.forward(&seq, true, dropout_rng)?;
        let (loss, grad) = huber_loss(&targets, &q.data, self.config.huber_delta)?;
        self.critic.zero_grad();
        self.critic.backward(&cache, &Matrix::from_vec(q.rows, 1, grad)?, true)?;
        self.critic_opt.step(&mut self.critic.parameters_mut())?;
        Ok(loss)
    }

    /// Actor loss `-Σ_b Q(s_b, A(s_b))` and its gradient with respect to
    /// the actor's parameters (left in the grad buffers).
    pub fn actor_loss_and_grad(&mut self, batch: &[&Transition]) -> Result<f64, AgentError> {
        self.check_batch(batch)?;
        let m = self.assets();
        let states = self.scaler.batch(batch.iter().map(|t| &t.state));
        let (raw, actor_cache) = self.actor.forward(&states)?;
        let actions = normalized_rows(&raw);
        let contexts: Vec<_> = batch.iter().map(|t| window_pairs(t, self.config.critic_window, false)).collect();
        let seq = self.critic_sequence(&contexts, &states, &actions)?;
        let mut unused = SeedStream::new(0).rng("unused");
        let (q, critic_cache) = self.critic.forward(&seq, false, &mut unused)?;
        let loss = -q.data.iter().sum::<f64>();
        let dq = Matrix::from_vec(q.rows, 1, vec![-1.0; q.rows])?;
        let d_inputs = self.critic.backward(&critic_cache, &dq, false)?;
        let d_last = d_inputs.last().expect("non-empty sequence");
        let state_dim = self.state_dim();
        let mut d_raw = Matrix::zeros(batch.len(), m);
        for r in 0..batch.len() {
            let dw = &d_last.row(r)[state_dim..state_dim + m];
            d_raw.row_mut(r).copy_from_slice(&normalize_weights_backward(raw.row(r), dw));
        }
        self.actor.zero_grad();
        self.actor.backward(&actor_cache, &d_raw, true);
        Ok(loss)
    }

    /// One gradient step on the actor through the frozen critic.
    pub fn update_actor(&mut self, batch: &[&Transition]) -> Result<f64, AgentError> {
        let loss = self.actor_loss_and_grad(batch)?;
        self.actor_opt.step(&mut self.actor.parameters_mut())?;
        Ok(loss)
    }

    /// Blend both target networks towards the online ones.
    pub fn soft_update_targets(&mut self) -> Result<(), AgentError> {
        soft_update(&self.actor, &mut self.target.actor, self.config.tau)?;
        soft_update(&self.critic, &mut self.target.critic, self.config.tau)?;
        Ok(())
    }

    pub fn to_checkpoint(&self) -> AgentCheckpoint {
        let mut params = ParamFile::default();
        params.push("actor", &self.actor);
        params.push("critic", &self.critic);
        params.push("target_actor", &self.target.actor);
        params.push("target_critic", &self.target.critic);
        AgentCheckpoint {
            tickers: self.tickers.clone(),
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            params,
        }
    }

    pub fn from_checkpoint(ckpt: &AgentCheckpoint) -> Result<Self, AgentError> {
        let mut agent = Self::new(
            ckpt.config.clone(),
            ckpt.tickers.clone(),
            ckpt.scaler.price_ref.clone(),
            ckpt.scaler.value_ref,
        )?;
        agent.scaler = ckpt.scaler.clone();
        ckpt.params.load_into("actor", &mut agent.actor)?;
        ckpt.params.load_into("critic", &mut agent.critic)?;
        ckpt.params.load_into("target_actor", &mut agent.target.actor)?;
        ckpt.params.load_into("target_critic", &mut agent.target.critic)?;
        Ok(agent)
    }
}

fn normalized_rows(raw: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(raw.rows, raw.cols);
    for r in 0..raw.rows {
        out.row_mut(r).copy_from_slice(&normalize_weights(raw.row(r)));
    }
    out
}

/// The `window - 1` `(state, action)` pairs preceding the final critic step.
/// For the current step that is the tail of the stored context; for the
/// successor step the current pair is appended first.
fn window_pairs(t: &Transition, window: usize, successor: bool) -> Vec<(&Observation, &[f64])> {
    let mut pairs: Vec<(&Observation, &[f64])> = t.context.iter().map(|(o, a)| (o, a.as_slice())).collect();
    if successor {
        pairs.push((&t.state, &t.action));
    }
    pairs.split_off(pairs.len() + 1 - window)
}

/// Everything needed to rebuild an agent: parameters, the training
/// configuration that shaped them, the asset list and the input scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub tickers: Vec<String>,
    pub config: TrainConfig,
    pub scaler: InputScaler,
    pub params: ParamFile,
}
