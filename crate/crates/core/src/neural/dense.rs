use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{accumulate_outer, matmul_dy_w, matmul_wt, sigmoid, Matrix, NeuralError, Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// `y = act(W x + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Matrix,
    output: Matrix,
}

impl DenseCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl DenseLayer {
    /// Weights and biases uniform in `±1/sqrt(input)`.
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[output, input], bound, rng),
            bias: Tensor::uniform(&[output], bound, rng),
            activation,
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self, NeuralError> {
        if weight.shape.len() != 2 || bias.shape != [weight.shape[0]] {
            return Err(NeuralError::Shape(format!(
                "dense weight {:?} with bias {:?}",
                weight.shape, bias.shape
            )));
        }
        Ok(Self { weight, bias, activation })
    }

    pub fn input_size(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn output_size(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseCache), NeuralError> {
        if x.cols != self.input_size() {
            return Err(NeuralError::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.input_size(),
                x.cols
            )));
        }
        let out_dim = self.output_size();
        let mut y = Matrix::zeros(x.rows, out_dim);
        matmul_wt(x, &self.weight.values, out_dim, &mut y, false);
        for b in 0..x.rows {
            for (v, &bias) in y.row_mut(b).iter_mut().zip(&self.bias.values) {
                *v = self.activation.apply(*v + bias);
            }
        }
        let cache = DenseCache { input: x.clone(), output: y.clone() };
        Ok((y, cache))
    }

    /// Backpropagate `dy`; returns the input gradient. Parameter gradients
    /// are accumulated only when `param_grads` is set.
    pub fn backward(&mut self, cache: &DenseCache, dy: &Matrix, param_grads: bool) -> Matrix {
        let mut dz = dy.clone();
        for (g, &y) in dz.data.iter_mut().zip(&cache.output.data) {
            *g *= self.activation.derivative_from_output(y);
        }
        if param_grads {
            accumulate_outer(&dz, &cache.input, self.weight.grad_mut());
            let db = self.bias.grad_mut();
            for b in 0..dz.rows {
                for (acc, &g) in db.iter_mut().zip(dz.row(b)) {
                    *acc += g;
                }
            }
        }
        let mut dx = Matrix::zeros(dz.rows, self.input_size());
        matmul_dy_w(&dz, &self.weight.values, self.input_size(), &mut dx);
        dx
    }
}

impl Parameters for DenseLayer {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}
