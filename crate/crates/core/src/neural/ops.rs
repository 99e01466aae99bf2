use rand::Rng;

use super::{Matrix, NeuralError};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverted dropout. In training mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; the returned mask
/// holds those multipliers. Evaluation mode (or `rate == 0`) is the identity
/// and returns no mask.
pub fn dropout(
    x: &Matrix,
    rate: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<(Matrix, Option<Vec<f64>>), NeuralError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NeuralError::Invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.data.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Matrix { rows: x.rows, cols: x.cols, data }, Some(mask)))
}

/// Mean Huber loss between targets `y` and predictions `f`, plus `dL/df`.
pub fn huber_loss(y: &[f64], f: &[f64], delta: f64) -> Result<(f64, Vec<f64>), NeuralError> {
    if y.len() != f.len() {
        return Err(NeuralError::Shape(format!("{} targets for {} predictions", y.len(), f.len())));
    }
    if y.is_empty() {
        return Ok((0.0, vec![]));
    }
    let n = y.len() as f64;
    let mut total = 0.0;
    let grad = y
        .iter()
        .zip(f)
        .map(|(&y, &f)| {
            let d = y - f;
            total += if d.abs() <= delta { 0.5 * d * d } else { delta * d.abs() - 0.5 * delta * delta };
            -d.clamp(-delta, delta) / n
        })
        .collect();
    Ok((total / n, grad))
}
