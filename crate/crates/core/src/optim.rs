//! AdamW with decoupled weight decay, plus global gradient-norm clipping.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// AdamW state: one (first moment, second moment) pair per parameter
/// tensor, in parameter order.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub first_moments: Vec<Tensor>,
    pub second_moments: Vec<Tensor>,
}

impl OptimizerState {
    /// State with moments zeroed to the given parameter shapes and the
    /// shipped defaults: betas (0.9, 0.95), weight decay 1e-4, eps 1e-8.
    pub fn new(params: &[&Tensor], learning_rate: f64) -> Self {
        OptimizerState {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.95,
            weight_decay: 1e-4,
            epsilon: 1e-8,
            first_moments: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            second_moments: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    /// One AdamW step over all parameters.
    ///
    /// Weight decay is decoupled: parameters shrink by `lr·wd` directly,
    /// never through the moment estimates. Non-finite gradients reject
    /// the whole step with no state mutated.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        assert_eq!(params.len(), self.first_moments.len(), "optimizer built for different params");
        for (p, g) in params.iter().zip(grads) {
            assert_eq!(p.shape(), g.shape(), "param/grad shape mismatch");
            if !g.is_finite() {
                return Err(Error::NumericFault { op: "adamw_step" });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - math::powi(self.beta1, t);
        let bc2 = 1.0 - math::powi(self.beta2, t);
        let lr = self.learning_rate;

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moments.iter_mut().zip(self.second_moments.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *pi *= 1.0 - lr * self.weight_decay;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (math::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let sq: f64 = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum();
    let norm = math::sqrt(sq);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut p = Tensor::from_vec(vec![1.5, -2.0]);
        let mut opt = OptimizerState::new(&[&p], 0.1).with_weight_decay(0.0);
        opt.step(&mut [&mut p], &[Tensor::zeros(vec![2])]).unwrap();
        assert_eq!(p.data(), &[1.5, -2.0]);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn decoupled_decay_formula() {
        // grad = 0, lr = 0.1, wd = 0.01, p = 1.0 → p' = 1 − 0.1·0.01 = 0.999
        let mut p = Tensor::scalar(1.0);
        let mut opt = OptimizerState::new(&[&p], 0.1).with_weight_decay(0.01);
        opt.step(&mut [&mut p], &[Tensor::scalar(0.0)]).unwrap();
        assert!((p.item() - 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_with_unit_gradient() {
        // Bias-corrected moments give m̂ = v̂ = 1, so Δp ≈ −lr.
        let mut p = Tensor::scalar(1.0);
        let mut opt = OptimizerState::new(&[&p], 0.1).with_weight_decay(0.0);
        opt.step(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        assert!((p.item() - 0.9).abs() < 1e-8, "got {}", p.item());
    }

    #[test]
    fn non_finite_gradient_rejects_step() {
        let mut p = Tensor::scalar(1.0);
        let mut opt = OptimizerState::new(&[&p], 0.1);
        let err = opt.step(&mut [&mut p], &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert_eq!(err, Error::NumericFault { op: "adamw_step" });
        assert_eq!(p.item(), 1.0);
        assert_eq!(opt.step_count, 0);
    }

    #[test]
    fn step_count_strictly_increases() {
        let mut p = Tensor::scalar(0.0);
        let mut opt = OptimizerState::new(&[&p], 0.01);
        for want in 1..=5 {
            opt.step(&mut [&mut p], &[Tensor::scalar(0.3)]).unwrap();
            assert_eq!(opt.step_count, want);
        }
    }

    #[test]
    fn clip_grad_norm_cases() {
        // Below the bound: unchanged.
        let mut g = vec![Tensor::from_vec(vec![0.3, 0.4])];
        let norm = clip_grad_norm(&mut g, 1.0);
        assert!((norm - 0.5).abs() < 1e-15);
        assert_eq!(g[0].data(), &[0.3, 0.4]);

        // Above the bound: rescaled to max_norm.
        let mut g = vec![Tensor::from_vec(vec![3.0, 4.0])];
        let norm = clip_grad_norm(&mut g, 1.0);
        assert!((norm - 5.0).abs() < 1e-15);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        assert!((g[0].data()[1] - 0.8).abs() < 1e-15);

        // Zero gradients: untouched, zero norm.
        let mut g = vec![Tensor::zeros(vec![3])];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 0.0);
        assert_eq!(g[0].data(), &[0.0, 0.0, 0.0]);
    }
}
