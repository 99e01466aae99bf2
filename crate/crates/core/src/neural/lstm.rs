use rand::Rng;

use super::{accumulate_outer, matmul_dy_w, matmul_wt, sigmoid, Matrix, NeuralError, Parameters, Tensor};

/// Standard LSTM layer. The four gates are packed row-wise in the order
/// input, forget, output, candidate: `w_input` is `4H x I`, `w_recurrent`
/// is `4H x H` and `bias` has `4H` entries.
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
/// o = σ(W_o x + U_o h + b_o)    g = tanh(W_g x + U_g h + b_g)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub w_input: Tensor,
    pub w_recurrent: Tensor,
    pub bias: Tensor,
    hidden: usize,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Matrix,
    h_prev: Matrix,
    c_prev: Matrix,
    /// Post-activation gates, `B x 4H` in (i, f, o, g) order.
    gates: Matrix,
    tanh_c: Matrix,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
}

#[derive(Debug, Clone)]
pub struct LstmOutput {
    pub h_seq: Vec<Matrix>,
    pub h_last: Matrix,
    pub c_last: Matrix,
    pub cache: LstmCache,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub dx_seq: Vec<Matrix>,
    /// Present only when requested from [`LstmLayer::backward`].
    pub dh0: Option<Matrix>,
    pub dc0: Option<Matrix>,
}

impl LstmLayer {
    /// Weights uniform in `±1/sqrt(hidden)`, forget-gate bias `+1`.
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut bias = Tensor::uniform(&[4 * hidden], bound, rng);
        for b in &mut bias.values[hidden..2 * hidden] {
            *b = 1.0;
        }
        Self {
            w_input: Tensor::uniform(&[4 * hidden, input], bound, rng),
            w_recurrent: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            bias,
            hidden,
        }
    }

    pub fn from_parts(w_input: Tensor, w_recurrent: Tensor, bias: Tensor) -> Result<Self, NeuralError> {
        let rows = bias.len();
        if !rows.is_multiple_of(4) || rows == 0 {
            return Err(NeuralError::Shape(format!("lstm bias of length {rows}")));
        }
        let hidden = rows / 4;
        if w_input.shape.len() != 2
            || w_input.shape[0] != rows
            || w_recurrent.shape != [rows, hidden]
        {
            return Err(NeuralError::Shape(format!(
                "lstm weights {:?} / {:?} for hidden {hidden}",
                w_input.shape, w_recurrent.shape
            )));
        }
        Ok(Self { w_input, w_recurrent, bias, hidden })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_size(&self) -> usize {
        self.w_input.shape[1]
    }

    /// Run the cell over `xs` (each `B x I`) starting from `(h0, c0)`.
    pub fn forward(&self, xs: &[Matrix], h0: &Matrix, c0: &Matrix) -> Result<LstmOutput, NeuralError> {
        let h = self.hidden;
        let batch = h0.rows;
        if h0.cols != h || c0.cols != h || c0.rows != batch {
            return Err(NeuralError::Shape("initial state does not match hidden size".into()));
        }
        let mut h_prev = h0.clone();
        let mut c_prev = c0.clone();
        let mut h_seq = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            if x.cols != self.input_size() || x.rows != batch {
                return Err(NeuralError::Shape(format!(
                    "lstm expects {batch}x{} input, got {}x{}",
                    self.input_size(),
                    x.rows,
                    x.cols
                )));
            }
            let mut gates = Matrix::zeros(batch, 4 * h);
            matmul_wt(x, &self.w_input.values, 4 * h, &mut gates, false);
            if !h_prev.is_zero() {
                matmul_wt(&h_prev, &self.w_recurrent.values, 4 * h, &mut gates, true);
            }
            let mut c = Matrix::zeros(batch, h);
            let mut tanh_c = Matrix::zeros(batch, h);
            let mut h_next = Matrix::zeros(batch, h);
            for b in 0..batch {
                let row = gates.row_mut(b);
                for (z, bias) in row.iter_mut().zip(&self.bias.values) {
                    *z += bias;
                }
                for z in &mut row[..3 * h] {
                    *z = sigmoid(*z);
                }
                for z in &mut row[3 * h..] {
                    *z = z.tanh();
                }
                let row = gates.row(b);
                let cp = c_prev.row(b);
                for k in 0..h {
                    let (i, f, o, g) = (row[k], row[h + k], row[2 * h + k], row[3 * h + k]);
                    let cv = f * cp[k] + i * g;
                    let tc = cv.tanh();
                    c.data[b * h + k] = cv;
                    tanh_c.data[b * h + k] = tc;
                    h_next.data[b * h + k] = o * tc;
                }
            }
            steps.push(StepCache {
                x: x.clone(),
                h_prev: h_prev.clone(),
                c_prev: c_prev.clone(),
                gates,
                tanh_c,
            });
            h_seq.push(h_next.clone());
            h_prev = h_next;
            c_prev = c;
        }
        Ok(LstmOutput { h_seq, h_last: h_prev, c_last: c_prev, cache: LstmCache { steps } })
    }

    /// Backpropagation through time. `dh_seq[t]` is the gradient arriving at
    /// the output of step `t`; `dc_last` optionally adds a gradient on the
    /// final cell state. Initial-state gradients are computed only when
    /// `initial_grads` is set.
    pub fn backward(
        &mut self,
        cache: &LstmCache,
        dh_seq: &[Matrix],
        dc_last: Option<&Matrix>,
        param_grads: bool,
        initial_grads: bool,
    ) -> Result<LstmGrads, NeuralError> {
        let h = self.hidden;
        let steps = &cache.steps;
        if dh_seq.len() != steps.len() {
            return Err(NeuralError::Shape(format!(
                "{} output gradients for {} steps",
                dh_seq.len(),
                steps.len()
            )));
        }
        let Some(first) = steps.first() else {
            return Ok(LstmGrads { dx_seq: vec![], dh0: None, dc0: None });
        };
        let batch = first.x.rows;
        let mut dh_carry = Matrix::zeros(batch, h);
        let mut dc_carry = dc_last.cloned().unwrap_or_else(|| Matrix::zeros(batch, h));
        let mut dx_seq = vec![Matrix::zeros(0, 0); steps.len()];
        let mut dh0 = None;
        for (t, step) in steps.iter().enumerate().rev() {
            let mut dz = Matrix::zeros(batch, 4 * h);
            let mut dc_prev = Matrix::zeros(batch, h);
            for b in 0..batch {
                let gates = step.gates.row(b);
                let dh_out = dh_seq[t].row(b);
                for k in 0..h {
                    let idx = b * h + k;
                    let (i, f, o, g) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
                    let tc = step.tanh_c.data[idx];
                    let dh = dh_out[k] + dh_carry.data[idx];
                    let d_o = dh * tc;
                    let dc = dc_carry.data[idx] + dh * o * (1.0 - tc * tc);
                    let d_i = dc * g;
                    let d_g = dc * i;
                    let d_f = dc * step.c_prev.data[idx];
                    dc_prev.data[idx] = dc * f;
                    let row = &mut dz.data[b * 4 * h..(b + 1) * 4 * h];
                    row[k] = d_i * i * (1.0 - i);
                    row[h + k] = d_f * f * (1.0 - f);
                    row[2 * h + k] = d_o * o * (1.0 - o);
                    row[3 * h + k] = d_g * (1.0 - g * g);
                }
            }
            let h_prev_zero = step.h_prev.is_zero();
            if param_grads {
                accumulate_outer(&dz, &step.x, self.w_input.grad_mut());
                if !h_prev_zero {
                    accumulate_outer(&dz, &step.h_prev, self.w_recurrent.grad_mut());
                }
                let db = self.bias.grad_mut();
                for b in 0..batch {
                    for (acc, &g) in db.iter_mut().zip(dz.row(b)) {
                        *acc += g;
                    }
                }
            }
            let mut dx = Matrix::zeros(batch, self.input_size());
            matmul_dy_w(&dz, &self.w_input.values, self.input_size(), &mut dx);
            dx_seq[t] = dx;
            if t > 0 || initial_grads {
                let mut dh_prev = Matrix::zeros(batch, h);
                matmul_dy_w(&dz, &self.w_recurrent.values, h, &mut dh_prev);
                if t == 0 {
                    dh0 = Some(dh_prev.clone());
                }
                dh_carry = dh_prev;
            }
            dc_carry = dc_prev;
        }
        let dc0 = initial_grads.then_some(dc_carry);
        Ok(LstmGrads { dx_seq, dh0, dc0 })
    }
}

impl Parameters for LstmLayer {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_input".into(), &self.w_input),
            ("w_recurrent".into(), &self.w_recurrent),
            ("bias".into(), &self.bias),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_input, &mut self.w_recurrent, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_layer(input: usize, hidden: usize) -> LstmLayer {
        LstmLayer::from_parts(
            Tensor::full(&[4 * hidden, input], 0.0),
            Tensor::full(&[4 * hidden, hidden], 0.0),
            Tensor::full(&[4 * hidden], 0.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_zero_state() {
        // gates all sigmoid(0) = 0.5, candidate tanh(0) = 0, so c = 0 and h = 0
        let l = zero_layer(3, 2);
        let x = Matrix::from_rows(&[vec![1.0, -1.0, 2.0]]).unwrap();
        let out = l.forward(&[x], &Matrix::zeros(1, 2), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(out.h_last.data, vec![0.0, 0.0]);
        assert_eq!(out.c_last.data, vec![0.0, 0.0]);
        assert_eq!(out.cache.steps[0].gates.data, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn empty_sequence_returns_initial_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = LstmLayer::new(3, 2, &mut rng);
        let h0 = Matrix::from_rows(&[vec![0.1, 0.2]]).unwrap();
        let c0 = Matrix::from_rows(&[vec![0.3, -0.4]]).unwrap();
        let out = l.forward(&[], &h0, &c0).unwrap();
        assert!(out.h_seq.is_empty());
        assert_eq!(out.h_last, h0);
        assert_eq!(out.c_last, c0);
    }

    #[test]
    fn zero_candidate_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l = LstmLayer::new(2, 3, &mut rng);
        // candidate rows produce exactly zero pre-activation
        for v in &mut l.w_input.values[3 * 3 * 2..] {
            *v = 0.0;
        }
        for v in &mut l.bias.values[9..] {
            *v = 0.0;
        }
        let x = Matrix::from_rows(&[vec![0.7, -2.0]]).unwrap();
        let out = l.forward(&[x], &Matrix::zeros(1, 3), &Matrix::zeros(1, 3)).unwrap();
        assert_eq!(out.h_last.data, vec![0.0; 3]);
    }

    #[test]
    fn forget_bias_initialised_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = LstmLayer::new(4, 5, &mut rng);
        assert!(l.bias.values[5..10].iter().all(|&b| b == 1.0));
        let bound = 1.0 / 5f64.sqrt();
        assert!(l.w_input.values.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn hidden_state_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut l = LstmLayer::new(2, 4, &mut rng);
        for v in &mut l.w_input.values {
            *v *= 50.0;
        }
        let xs: Vec<Matrix> = (0..6).map(|t| Matrix::from_rows(&[vec![t as f64, -3.0]]).unwrap()).collect();
        let out = l.forward(&xs, &Matrix::zeros(1, 4), &Matrix::zeros(1, 4)).unwrap();
        assert!(out.h_seq.iter().flat_map(|m| &m.data).all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut l = LstmLayer::new(3, 4, &mut rng);
        let xs: Vec<Matrix> = (0..4)
            .map(|t| {
                Matrix::from_rows(&[
                    vec![0.3 * t as f64, -0.5, 0.2],
                    vec![-0.1, 0.4 * t as f64, 0.9],
                ])
                .unwrap()
            })
            .collect();
        let h0 = Matrix::from_rows(&[vec![0.1, -0.2, 0.3, 0.0], vec![0.0, 0.5, -0.5, 0.2]]).unwrap();
        let c0 = Matrix::from_rows(&[vec![0.2, 0.1, -0.3, 0.4], vec![-0.1, 0.0, 0.2, 0.3]]).unwrap();
        let coef: Vec<f64> = (0..8).map(|k| (k as f64 * 0.37).sin()).collect();
        let loss = |l: &LstmLayer| {
            let out = l.forward(&xs, &h0, &c0).unwrap();
            let hs: f64 = out.h_seq.iter().map(|m| m.data.iter().sum::<f64>()).sum();
            hs + out.c_last.data.iter().zip(&coef).map(|(c, k)| c * k).sum::<f64>()
        };
        let analytic = |l: &mut LstmLayer| {
            l.zero_grad();
            let out = l.forward(&xs, &h0, &c0).unwrap();
            let dh: Vec<Matrix> = out.h_seq.iter().map(|m| Matrix::from_vec(m.rows, m.cols, vec![1.0; m.data.len()]).unwrap()).collect();
            let dc = Matrix::from_vec(2, 4, coef.clone()).unwrap();
            l.backward(&out.cache, &dh, Some(&dc), true, true).unwrap();
        };
        let report = grad_check(&mut l, loss, analytic, None);
        assert!(report.max_rel_error() < 1e-6, "{report}");
        assert!(report.blocks.iter().all(|b| b.checked > 0));
    }

    #[test]
    fn initial_state_gradient() {
        // d loss / d h0 via finite differences on h0 itself
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut l = LstmLayer::new(2, 3, &mut rng);
        let xs = vec![Matrix::from_rows(&[vec![0.5, -0.5]]).unwrap(); 2];
        let c0 = Matrix::zeros(1, 3);
        let h0 = Matrix::from_rows(&[vec![0.2, -0.1, 0.4]]).unwrap();
        let f = |h0: &Matrix| l.forward(&xs, h0, &c0).unwrap().h_last.data.iter().sum::<f64>();
        let mut numeric = vec![];
        for k in 0..3 {
            let mut plus = h0.clone();
            plus.data[k] += 1e-5;
            let mut minus = h0.clone();
            minus.data[k] -= 1e-5;
            numeric.push((f(&plus) - f(&minus)) / 2e-5);
        }
        let out = l.forward(&xs, &h0, &c0).unwrap();
        let zero = Matrix::zeros(1, 3);
        let ones = Matrix::from_rows(&[vec![1.0; 3]]).unwrap();
        let grads = l.backward(&out.cache, &[zero, ones], None, false, true).unwrap();
        let dh0 = grads.dh0.unwrap();
        for (a, n) in dh0.data.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-8);
        }
    }
}
