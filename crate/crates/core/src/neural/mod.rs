//! A small reverse-mode numeric kernel: exactly the layers the actor and
//! critic need, each with a hand-written backward pass.
//!
//! Activations travel as row-major [`Matrix`] batches (`rows = batch`).
//! Trainable parameters are [`Tensor`]s that carry their own gradient buffer;
//! backward passes accumulate into it. Everything is `f64`.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod lstm;
mod ops;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{NamedTensor, ParamFile, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use dense::{Activation, DenseCache, DenseLayer};
pub use gradcheck::{grad_check, BlockCheck, GradCheckReport, FD_EPSILON};
pub use lstm::{LstmCache, LstmGrads, LstmLayer, LstmOutput};
pub use ops::{dropout, huber_loss, sigmoid};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Row-major `rows x cols` batch of activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NeuralError> {
        if data.len() != rows * cols {
            return Err(NeuralError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NeuralError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NeuralError::Shape("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Columns `start..start + width` of every row.
    pub fn columns(&self, start: usize, width: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    /// Side-by-side concatenation `[a | b]`.
    pub fn hstack(a: &Matrix, b: &Matrix) -> Result<Matrix, NeuralError> {
        if a.rows != b.rows {
            return Err(NeuralError::Shape(format!("hstack of {} and {} rows", a.rows, b.rows)));
        }
        let mut out = Matrix::zeros(a.rows, a.cols + b.cols);
        for r in 0..a.rows {
            let row = out.row_mut(r);
            row[..a.cols].copy_from_slice(a.row(r));
            row[a.cols..].copy_from_slice(b.row(r));
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

/// Parameter block: values plus an optional gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Tracked tensor filled with `value`.
    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), values: vec![value; n], grad: Some(vec![0.0; n]) }
    }

    /// Tracked tensor with entries uniform in `[-bound, bound]`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let mut t = Self::full(shape, 0.0);
        for v in &mut t.values {
            *v = rng.random_range(-bound..=bound);
        }
        t
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Self, NeuralError> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(NeuralError::Shape(format!("{} values for shape {shape:?}", values.len())));
        }
        Ok(Self { shape: shape.to_vec(), values, grad: Some(vec![0.0; n]) })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|x| *x = 0.0),
            None => self.grad = Some(vec![0.0; self.values.len()]),
        }
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn grad(&self) -> &[f64] {
        self.grad.as_deref().unwrap_or(&[])
    }
}

/// Anything that owns trainable tensors, in a fixed order.
pub trait Parameters {
    fn parameters(&self) -> Vec<(String, &Tensor)>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update<P: Parameters>(online: &P, target: &mut P, tau: f64) -> Result<(), NeuralError> {
    let src = online.parameters();
    let dst = target.parameters_mut();
    if src.len() != dst.len() {
        return Err(NeuralError::Shape("parameter lists differ".into()));
    }
    for ((name, s), d) in src.iter().zip(dst) {
        if s.shape != d.shape {
            return Err(NeuralError::Shape(format!("{name}: {:?} vs {:?}", s.shape, d.shape)));
        }
        for (t, &o) in d.values.iter_mut().zip(&s.values) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}

/// Dot product with four fixed-order partial sums (vectorises, and the
/// summation order never depends on anything but the length).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[b] = W x[b] (+ out[b])` for `W` stored `out x in` row-major.
/// Batches run as row updates against a transposed copy of `W`, which
/// vectorises where a per-output dot product would not; a handful of rows
/// is not worth the transpose.
pub(crate) fn matmul_wt(x: &Matrix, w: &[f64], out_dim: usize, out: &mut Matrix, accumulate: bool) {
    let in_dim = x.cols;
    if x.rows < TILE {
        for b in 0..x.rows {
            let xr = x.row(b);
            for o in 0..out_dim {
                let d = dot(&w[o * in_dim..(o + 1) * in_dim], xr);
                let slot = &mut out.data[b * out_dim + o];
                *slot = if accumulate { *slot + d } else { d };
            }
        }
        return;
    }
    let mut wt = vec![0.0; in_dim * out_dim];
    for o in 0..out_dim {
        for (j, &v) in w[o * in_dim..(o + 1) * in_dim].iter().enumerate() {
            wt[j * out_dim + o] = v;
        }
    }
    if !accumulate {
        out.data.iter_mut().for_each(|v| *v = 0.0);
    }
    matmul_dy_w(x, &wt, out_dim, out);
}

/// `dx[b] += sum_o dy[b][o] W[o]` (input gradient). Eight weight rows are
/// folded into each pass over `dx[b]`.
pub(crate) fn matmul_dy_w(dy: &Matrix, w: &[f64], in_dim: usize, dx: &mut Matrix) {
    let out_dim = dy.cols;
    for b in 0..dy.rows {
        let g = dy.row(b);
        let dxr = &mut dx.data[b * in_dim..(b + 1) * in_dim];
        let mut o = 0;
        while o + TILE <= out_dim {
            let gs: [f64; TILE] = g[o..o + TILE].try_into().expect("tile width");
            if gs.iter().any(|&v| v != 0.0) {
                let rows: [&[f64]; TILE] = std::array::from_fn(|k| &w[(o + k) * in_dim..(o + k + 1) * in_dim]);
                fold_rows(dxr, &gs, &rows);
            }
            o += TILE;
        }
        for o in o..out_dim {
            if g[o] != 0.0 {
                axpy(g[o], &w[o * in_dim..(o + 1) * in_dim], dxr);
            }
        }
    }
}

/// `dW[o] += sum_b dy[b][o] x[b]` (weight gradient).
pub(crate) fn accumulate_outer(dy: &Matrix, x: &Matrix, dw: &mut [f64]) {
    let in_dim = x.cols;
    let rows = dy.rows;
    let col = |b: usize, o: usize| dy.data[b * dy.cols + o];
    for o in 0..dy.cols {
        let dwr = &mut dw[o * in_dim..(o + 1) * in_dim];
        let mut b = 0;
        while b + TILE <= rows {
            let gs: [f64; TILE] = std::array::from_fn(|k| col(b + k, o));
            if gs.iter().any(|&v| v != 0.0) {
                let xs: [&[f64]; TILE] = std::array::from_fn(|k| x.row(b + k));
                fold_rows(dwr, &gs, &xs);
            }
            b += TILE;
        }
        for b in b..rows {
            let g = col(b, o);
            if g != 0.0 {
                axpy(g, x.row(b), dwr);
            }
        }
    }
}

const TILE: usize = 8;

/// `y += sum_k g[k] * rows[k]` with a fixed pairwise summation order.
#[inline]
fn fold_rows(y: &mut [f64], g: &[f64; TILE], rows: &[&[f64]; TILE]) {
    let n = y.len();
    let r: [&[f64]; TILE] = std::array::from_fn(|k| &rows[k][..n]);
    for j in 0..n {
        let a = (g[0] * r[0][j] + g[1] * r[1][j]) + (g[2] * r[2][j] + g[3] * r[3][j]);
        let b = (g[4] * r[4][j] + g[5] * r[5][j]) + (g[6] * r[6][j] + g[7] * r[7][j]);
        y[j] += a + b;
    }
}
