//! Bias-corrected Adam.

use super::TrainError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS_ADAM: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPS_ADAM,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One in-place update. A zero gradient leaves the parameters exactly
    /// unchanged (the update is 0/(0+ε)).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), TrainError> {
        assert_eq!(params.len(), self.m.len(), "param/state length mismatch");
        assert_eq!(grad.len(), self.m.len(), "grad/state length mismatch");
        if !crate::linalg::all_finite(grad) {
            return Err(TrainError::NonFiniteGradient { step: self.step + 1 });
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = AdamState::new(3, 0.1);
        let mut params = vec![1.0, -2.0, 0.5];
        adam.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn constant_gradient_update_approaches_lr() {
        let lr = 0.01;
        let mut adam = AdamState::new(1, lr);
        let mut params = vec![0.0];
        let mut last = params[0];
        for _ in 0..200 {
            adam.step(&mut params, &[0.3]).unwrap();
        }
        for _ in 0..5 {
            last = params[0];
            adam.step(&mut params, &[0.3]).unwrap();
        }
        let update = (params[0] - last).abs();
        assert!((update - lr).abs() < 1e-4, "update {update} vs lr {lr}");
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let mut adam = AdamState::new(4, 0.05);
            let mut params = vec![0.3, -0.1, 0.7, 0.0];
            for t in 0..50 {
                let grad: Vec<f64> = (0..4).map(|i| ((t * 4 + i) as f64 * 0.37).sin()).collect();
                adam.step(&mut params, &grad).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut adam = AdamState::new(2, 0.1);
        let mut params = vec![0.0, 0.0];
        assert!(matches!(
            adam.step(&mut params, &[1.0, f64::NAN]),
            Err(TrainError::NonFiniteGradient { step: 1 })
        ));
        assert_eq!(params, vec![0.0, 0.0]);
    }
}
