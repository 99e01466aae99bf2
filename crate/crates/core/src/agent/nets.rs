//! Actor and critic networks.

use rand::Rng;

use crate::neural::{
    dropout, Activation, DenseCache, DenseLayer, LstmCache, LstmLayer, Matrix, NeuralError, Parameters, Tensor,
};

/// Fully connected policy network: relu hidden layers and a sigmoid output,
/// so every raw action entry lies in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct ActorCache {
    layers: Vec<DenseCache>,
}

impl ActorNet {
    pub fn new(input: usize, hidden: &[usize], output: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for &h in hidden {
            layers.push(DenseLayer::new(fan_in, h, Activation::Relu, rng));
            fan_in = h;
        }
        layers.push(DenseLayer::new(fan_in, output, Activation::Sigmoid, rng));
        Self { layers }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("at least one layer").output_size()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ActorCache), NeuralError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&h)?;
            caches.push(cache);
            h = y;
        }
        Ok((h, ActorCache { layers: caches }))
    }

    pub fn backward(&mut self, cache: &ActorCache, d_out: &Matrix, param_grads: bool) -> Matrix {
        let mut grad = d_out.clone();
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            grad = layer.backward(c, &grad, param_grads);
        }
        grad
    }
}

impl Parameters for ActorNet {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.parameters().into_iter().map(move |(n, t)| (format!("fc{i}.{n}"), t)))
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }
}

/// Two stacked LSTM layers, dropout after each, a relu dense layer and a
/// scalar linear head. Input is a sequence of `[state, action]` rows; the
/// recurrent state starts from zero on every evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub lstm1: LstmLayer,
    pub lstm2: LstmLayer,
    pub fc: DenseLayer,
    pub head: DenseLayer,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct CriticCache {
    lstm1: LstmCache,
    masks1: Vec<Option<Vec<f64>>>,
    lstm2: LstmCache,
    mask2: Option<Vec<f64>>,
    fc: DenseCache,
    head: DenseCache,
}

fn apply_mask(m: &mut Matrix, mask: &Option<Vec<f64>>) {
    if let Some(mask) = mask {
        for (v, k) in m.data.iter_mut().zip(mask) {
            *v *= k;
        }
    }
}

impl CriticNet {
    pub fn new(input: usize, lstm_hidden: usize, fc_hidden: usize, dropout: f64, rng: &mut impl Rng) -> Self {
        Self {
            lstm1: LstmLayer::new(input, lstm_hidden, rng),
            lstm2: LstmLayer::new(lstm_hidden, lstm_hidden, rng),
            fc: DenseLayer::new(lstm_hidden, fc_hidden, Activation::Relu, rng),
            head: DenseLayer::new(fc_hidden, 1, Activation::Identity, rng),
            dropout,
        }
    }

    pub fn input_size(&self) -> usize {
        self.lstm1.input_size()
    }

    /// Q-values (`B x 1`) for the input sequence. Dropout is active only
    /// when `training` is set.
    pub fn forward(
        &self,
        seq: &[Matrix],
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(Matrix, CriticCache), NeuralError> {
        let batch = seq.first().ok_or_else(|| NeuralError::Invalid("empty critic sequence".into()))?.rows;
        let h1 = self.lstm1.hidden_size();
        let h2 = self.lstm2.hidden_size();
        let out1 = self.lstm1.forward(seq, &Matrix::zeros(batch, h1), &Matrix::zeros(batch, h1))?;
        let mut masks1 = Vec::with_capacity(seq.len());
        let mut dropped = Vec::with_capacity(seq.len());
        for h in &out1.h_seq {
            let (d, mask) = dropout(h, self.dropout, training, rng)?;
            masks1.push(mask);
            dropped.push(d);
        }
        let out2 = self.lstm2.forward(&dropped, &Matrix::zeros(batch, h2), &Matrix::zeros(batch, h2))?;
        let (last, mask2) = dropout(&out2.h_last, self.dropout, training, rng)?;
        let (hidden, fc) = self.fc.forward(&last)?;
        let (q, head) = self.head.forward(&hidden)?;
        Ok((q, CriticCache { lstm1: out1.cache, masks1, lstm2: out2.cache, mask2, fc, head }))
    }

    /// Backpropagate `dq`; returns gradients for each input step.
    pub fn backward(&mut self, cache: &CriticCache, dq: &Matrix, param_grads: bool) -> Result<Vec<Matrix>, NeuralError> {
        let d_hidden = self.head.backward(&cache.head, dq, param_grads);
        let mut d_last = self.fc.backward(&cache.fc, &d_hidden, param_grads);
        apply_mask(&mut d_last, &cache.mask2);
        let steps = cache.masks1.len();
        let mut dh2 = vec![Matrix::zeros(dq.rows, self.lstm2.hidden_size()); steps];
        dh2[steps - 1] = d_last;
        let g2 = self.lstm2.backward(&cache.lstm2, &dh2, None, param_grads, false)?;
        let mut dh1 = g2.dx_seq;
        for (d, mask) in dh1.iter_mut().zip(&cache.masks1) {
            apply_mask(d, mask);
        }
        let g1 = self.lstm1.backward(&cache.lstm1, &dh1, None, param_grads, false)?;
        Ok(g1.dx_seq)
    }
}

impl Parameters for CriticNet {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![];
        for (prefix, p) in [("lstm1", self.lstm1.parameters()), ("lstm2", self.lstm2.parameters())] {
            out.extend(p.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        for (prefix, p) in [("fc", self.fc.parameters()), ("head", self.head.parameters())] {
            out.extend(p.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.lstm1.parameters_mut();
        out.extend(self.lstm2.parameters_mut());
        out.extend(self.fc.parameters_mut());
        out.extend(self.head.parameters_mut());
        out
    }
}

/// `w = raw / sum(raw)`, or uniform when the sum is below `1e-8`.
pub fn normalize_weights(raw: &[f64]) -> Vec<f64> {
    let sum: f64 = raw.iter().sum();
    if sum < 1e-8 {
        vec![1.0 / raw.len() as f64; raw.len()]
    } else {
        raw.iter().map(|r| r / sum).collect()
    }
}

/// Gradient of [`normalize_weights`]: `d raw_j = (d w_j - sum_i d w_i w_i) / S`.
pub fn normalize_weights_backward(raw: &[f64], d_weights: &[f64]) -> Vec<f64> {
    let sum: f64 = raw.iter().sum();
    if sum < 1e-8 {
        return vec![0.0; raw.len()];
    }
    let inner: f64 = raw.iter().zip(d_weights).map(|(r, d)| r / sum * d).sum();
    d_weights.iter().map(|d| (d - inner) / sum).collect()
}
