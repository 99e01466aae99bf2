use std::collections::VecDeque;
use std::fmt::Write as _;

use super::{AgentError, DdpgAgent, OuNoise, ReplayBuffer, TrainConfig, Transition};
use crate::data::AlignedPanel;
use crate::env::{EnvConfig, MarketEnv, Observation};
use crate::util::{exact_sum, SeedStream};

/// One row per training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    /// Environment steps taken so far, over all episodes.
    pub step: u64,
    /// Sum of the episode's unscaled rewards.
    pub reward_sum: f64,
    /// Mean loss over the episode's updates; `None` before the first update.
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    /// Exploration probability in force at the last step of the episode.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        let mut out = String::from("epoch,step,reward_sum,critic_loss,actor_loss,epsilon\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                r.step,
                r.reward_sum,
                opt(r.critic_loss),
                opt(r.actor_loss),
                r.epsilon
            );
        }
        out
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Train a fresh agent on rows `start..=end` of `panel`, one episode per
/// epoch. Every stochastic choice draws from a named stream derived from
/// `config.seed`, so a fixed seed reproduces the run exactly.
pub fn train(
    panel: &AlignedPanel,
    env_config: &EnvConfig,
    start: usize,
    end: usize,
    config: &TrainConfig,
) -> Result<(DdpgAgent, TrainingLog), AgentError> {
    config.validate()?;
    let mut env = MarketEnv::with_range(panel, env_config.clone(), start, end)?;
    let mut agent = DdpgAgent::new(
        config.clone(),
        panel.tickers.clone(),
        panel.prices[start].clone(),
        env_config.initial_cash,
    )?;
    let seeds = SeedStream::new(config.seed);
    let mut explore_rng = seeds.rng("explore");
    let mut ou_rng = seeds.rng("ou");
    let mut replay_rng = seeds.rng("replay");
    let mut dropout_rng = seeds.rng("dropout");

    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut noise = OuNoise::new(&config.ou, panel.assets());
    let mut states_seen: u64 = 0;
    let mut log = TrainingLog::default();
    let window = config.critic_window;

    for epoch in 0..config.epochs {
        let mut obs = env.reset();
        noise.reset();
        let mut history: VecDeque<(Observation, Vec<f64>)> = VecDeque::with_capacity(window);
        let (mut rewards, mut critic_losses, mut actor_losses) = (vec![], vec![], vec![]);
        let mut epsilon;
        loop {
            epsilon = config.epsilon.epsilon(states_seen);
            states_seen += 1;
            let (weights, _) = agent.act_explore(&obs, epsilon, &mut noise, &mut explore_rng, &mut ou_rng)?;
            let result = env.step(&weights)?;
            let action = weights.into_inner();
            rewards.push(result.reward);

            // pad the start of an episode by repeating its first pair
            let mut context: Vec<_> = history.iter().cloned().collect();
            while context.len() + 1 < window {
                context.insert(0, context.first().cloned().unwrap_or_else(|| (obs.clone(), action.clone())));
            }
            if window > 1 {
                history.push_back((obs.clone(), action.clone()));
                if history.len() > window - 1 {
                    history.pop_front();
                }
            }
            buffer.push(Transition {
                state: obs,
                action,
                reward: result.reward * config.reward_scale,
                next_state: result.next_obs.clone(),
                done: result.done,
                context,
            });

            if buffer.len() >= config.batch_size && states_seen.is_multiple_of(config.train_every as u64) {
                let batch = buffer.sample(config.batch_size, &mut replay_rng);
                critic_losses.push(agent.update_critic(&batch, &mut dropout_rng)?);
                actor_losses.push(agent.update_actor(&batch)?);
                agent.soft_update_targets()?;
            }

            obs = result.next_obs;
            if result.done {
                break;
            }
        }
        log.rows.push(LogRow {
            epoch,
            step: states_seen,
            reward_sum: exact_sum(rewards),
            critic_loss: mean(&critic_losses),
            actor_loss: mean(&actor_losses),
            epsilon,
        });
    }
    Ok((agent, log))
}
