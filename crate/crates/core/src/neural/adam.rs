use serde::{Deserialize, Serialize};

use super::{NeuralError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected adaptive-moment optimiser. Moment buffers are created on
/// the first step and must keep matching the parameter list afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: vec![], second: vec![] }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<(), NeuralError> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(NeuralError::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let n = p.len();
            let grad = p.grad.take().unwrap_or_else(|| vec![0.0; n]);
            for k in 0..n {
                let g = grad[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p.values[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.grad = Some(grad);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = Tensor::full(&[3], 0.7);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.values, vec![0.7; 3]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = 1, v_hat = 1 -> delta = lr / (1 + eps)
        let mut p = Tensor::full(&[1], 0.0);
        p.grad_mut()[0] = 1.0;
        let mut adam = Adam::new(AdamConfig { lr: 0.001, ..AdamConfig::default() });
        adam.step(&mut [&mut p]).unwrap();
        assert!((p.values[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn equal_gradients_equal_updates() {
        let mut a = Tensor::full(&[2], 1.0);
        let mut b = Tensor::full(&[1], 1.0);
        a.grad_mut().copy_from_slice(&[0.3, 0.3]);
        b.grad_mut()[0] = 0.3;
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut [&mut a, &mut b]).unwrap();
        }
        assert_eq!(a.values[0], a.values[1]);
        assert_eq!(a.values[0], b.values[0]);
    }

    #[test]
    fn mismatched_parameters_rejected() {
        let mut a = Tensor::full(&[2], 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut a]).unwrap();
        let mut b = Tensor::full(&[3], 1.0);
        assert!(adam.step(&mut [&mut b]).is_err());
    }
}
