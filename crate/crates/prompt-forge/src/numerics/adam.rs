//! Adam with bias correction. Defaults follow the training setup used across
//! this project: beta1 = 0.9, beta2 = 0.98, eps = 1e-6.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    /// First moment (running mean of gradients).
    pub m: Vec<f64>,
    /// Second moment (running mean of squared gradients).
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            lr,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
        }
    }

    /// One bias-corrected update. `params` and `grads` must match the moment
    /// arrays in length.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam length mismatch: params {}, grads {}, state {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_learning_rate() {
        // At step 1 bias correction gives m_hat = g, v_hat = g^2, so the
        // update is -lr * g / (|g| + eps).
        let mut state = AdamState::new(1, 1e-3);
        let mut p = vec![0.0];
        state.update(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-6, "got {}", p[0]);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut state = AdamState::new(3, 0.1);
        let mut p = vec![1.5, -2.0, 0.25];
        let before = p.clone();
        for _ in 0..5 {
            state.update(&mut p, &[0.0, 0.0, 0.0]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn two_steps_match_hand_transcribed_recurrence() {
        // Independent oracle: the Adam recurrence transcribed step by step
        // for a scalar parameter with constant gradient.
        let (lr, b1, b2, eps, g) = (1e-2, 0.9, 0.98, 1e-6, 0.7);
        let mut m = 0.0_f64;
        let mut v = 0.0_f64;
        let mut x_oracle = 0.3_f64;
        for step in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(step));
            let v_hat = v / (1.0 - b2.powi(step));
            x_oracle -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        let mut state = AdamState::new(1, lr);
        let mut p = vec![0.3];
        state.update(&mut p, &[g]).unwrap();
        state.update(&mut p, &[g]).unwrap();
        assert!((p[0] - x_oracle).abs() < 1e-15);
        assert_eq!(state.step, 2);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut state = AdamState::new(2, 1e-3);
        let mut p = vec![0.0, 0.0];
        assert!(state.update(&mut p, &[1.0]).is_err());
    }
}
