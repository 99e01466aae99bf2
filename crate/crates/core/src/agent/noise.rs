use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuConfig {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl Default for OuConfig {
    fn default() -> Self {
        Self { theta: 0.15, mu: 0.0, sigma: 0.2, dt: 1.0 }
    }
}

/// Ornstein-Uhlenbeck process, Euler-discretised:
/// `x <- x + θ(μ - x)dt + σ√dt·N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub theta: f64,
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub dt: f64,
    pub state: Vec<f64>,
}

impl OuNoise {
    pub fn new(config: &OuConfig, dim: usize) -> Self {
        Self {
            theta: config.theta,
            mu: vec![config.mu; dim],
            sigma: config.sigma,
            dt: config.dt,
            state: vec![config.mu; dim],
        }
    }

    pub fn reset(&mut self) {
        self.state.clone_from(&self.mu);
    }

    pub fn sample(&mut self, rng: &mut impl Rng) -> &[f64] {
        let scale = self.sigma * self.dt.sqrt();
        for (x, mu) in self.state.iter_mut().zip(&self.mu) {
            let z: f64 = rng.sample(StandardNormal);
            *x += self.theta * (mu - *x) * self.dt + scale * z;
        }
        &self.state
    }
}

/// Piecewise-constant exploration probability over the number of states
/// visited so far: `values[k]` applies once `thresholds[k-1] <= n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub thresholds: Vec<u64>,
    pub values: Vec<f64>,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { thresholds: vec![1000, 2000], values: vec![0.5, 0.25, 0.1] }
    }
}

impl EpsilonSchedule {
    pub fn epsilon(&self, states_seen: u64) -> f64 {
        let k = self.thresholds.iter().take_while(|&&t| t <= states_seen).count();
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn is_valid(&self) -> bool {
        self.values.len() == self.thresholds.len() + 1
            && self.thresholds.windows(2).all(|w| w[0] < w[1])
            && self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }
}
