use std::fmt;

use super::Parameters;

/// Central-difference step.
pub const FD_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(
                f,
                "{:<32} n={:<7} max_rel={:.3e} max_abs={:.3e}",
                b.name, b.checked, b.max_rel_error, b.max_abs_error
            )?;
        }
        Ok(())
    }
}

/// Compare analytic gradients with central finite differences.
///
/// `analytic` must leave the gradient of `loss` in every parameter's grad
/// buffer. Relative error is `|a - n| / max(|a|, |n|, 1e-8)`. With
/// `per_block = Some(k)` only `k` evenly spaced entries of each block are
/// perturbed. Mismatches are reported, never raised.
pub fn grad_check<N, L, A>(net: &mut N, mut loss: L, mut analytic: A, per_block: Option<usize>) -> GradCheckReport
where
    N: Parameters,
    L: FnMut(&N) -> f64,
    A: FnMut(&mut N),
{
    analytic(net);
    let grads: Vec<(String, Vec<f64>)> = net
        .parameters()
        .into_iter()
        .map(|(name, t)| (name, t.grad().to_vec()))
        .collect();
    let mut blocks = Vec::with_capacity(grads.len());
    for (block, (name, grad)) in grads.iter().enumerate() {
        let n = grad.len();
        let stride = match per_block {
            Some(k) if k > 0 && k < n => n.div_ceil(k),
            _ => 1,
        };
        let mut check = BlockCheck { name: name.clone(), checked: 0, max_rel_error: 0.0, max_abs_error: 0.0 };
        for idx in (0..n).step_by(stride) {
            let original = net.parameters_mut()[block].values[idx];
            net.parameters_mut()[block].values[idx] = original + FD_EPSILON;
            let plus = loss(net);
            net.parameters_mut()[block].values[idx] = original - FD_EPSILON;
            let minus = loss(net);
            net.parameters_mut()[block].values[idx] = original;
            let numeric = (plus - minus) / (2.0 * FD_EPSILON);
            let a = grad[idx];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-8);
            check.checked += 1;
            check.max_abs_error = check.max_abs_error.max(abs);
            check.max_rel_error = check.max_rel_error.max(rel);
        }
        blocks.push(check);
    }
    GradCheckReport { blocks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    struct Scalar(Tensor);

    impl Parameters for Scalar {
        fn parameters(&self) -> Vec<(String, &Tensor)> {
            vec![("x".into(), &self.0)]
        }
        fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn constant_loss_zero_gradients() {
        let mut s = Scalar(Tensor::full(&[4], 1.0));
        let report = grad_check(&mut s, |_| 3.0, |s| s.zero_grad(), None);
        assert_eq!(report.max_rel_error(), 0.0);
        assert_eq!(report.blocks[0].checked, 4);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let mut s = Scalar(Tensor::full(&[2], 1.5));
        let loss = |s: &Scalar| s.0.values.iter().map(|v| v * v).sum::<f64>();
        let report = grad_check(&mut s, loss, |s| s.0.grad_mut().copy_from_slice(&[3.0, 1.0]), None);
        assert!(!report.passed(1e-4));
        assert!((report.max_rel_error() - 2.0 / 3.0).abs() < 1e-6);
        // values restored after probing
        assert_eq!(s.0.values, vec![1.5, 1.5]);
    }

    #[test]
    fn subsampling_limits_probes() {
        let mut s = Scalar(Tensor::full(&[100], 0.0));
        let report = grad_check(&mut s, |_| 0.0, |s| s.zero_grad(), Some(10));
        assert_eq!(report.blocks[0].checked, 10);
    }
}
