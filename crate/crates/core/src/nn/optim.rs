//! SGD and Adam parameter updates.

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// Bias-corrected Adam moments over one flat parameter vector. Shared by
/// the network trainer and the spectrogram optimizer.
#[derive(Clone, Debug)]
pub struct AdamMoments {
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamMoments {
    pub fn new(n: usize) -> Self {
        AdamMoments {
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Optimizer state across all parameter tensors of a model.
pub struct OptState {
    kind: OptimKind,
    moments: Vec<AdamMoments>,
}

impl OptState {
    /// `param_sizes` must list the parameter tensor sizes in the order
    /// [`crate::nn::Model::params`] yields them.
    pub fn new(kind: OptimKind, param_sizes: &[usize]) -> Self {
        let moments = match kind {
            OptimKind::Sgd => Vec::new(),
            OptimKind::Adam => param_sizes.iter().map(|&n| AdamMoments::new(n)).collect(),
        };
        OptState { kind, moments }
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }
}

/// Apply one optimizer step. Refuses (and leaves parameters untouched) if
/// any gradient entry is non-finite.
pub fn optimizer_step(
    state: &mut OptState,
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    learning_rate: f64,
) -> Result<(), NnError> {
    assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
    for (i, g) in grads.iter().enumerate() {
        if !g.all_finite() {
            return Err(NnError::NonFiniteGradient { param: i });
        }
    }
    match state.kind {
        OptimKind::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                    *pv -= learning_rate * gv;
                }
            }
        }
        OptimKind::Adam => {
            assert_eq!(state.moments.len(), params.len());
            for ((p, g), m) in params.iter_mut().zip(grads).zip(&mut state.moments) {
                m.step(p.data_mut(), g.data(), learning_rate);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_moves_against_gradient() {
        let mut p = Tensor::new(vec![1], vec![1.0]);
        let g = Tensor::new(vec![1], vec![1.0]);
        let mut state = OptState::new(OptimKind::Sgd, &[1]);
        optimizer_step(&mut state, &mut [&mut p], &[&g], 0.1).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_magnitude_is_about_lr() {
        // With bias correction, the first update is lr * g/(|g| + eps') ~ lr * sign(g).
        for &g0 in &[0.003, -1.7, 250.0] {
            let mut p = Tensor::new(vec![1], vec![0.0]);
            let g = Tensor::new(vec![1], vec![g0]);
            let mut state = OptState::new(OptimKind::Adam, &[1]);
            optimizer_step(&mut state, &mut [&mut p], &[&g], 0.05).unwrap();
            let delta = p.data()[0];
            assert!(
                (delta.abs() - 0.05).abs() < 1e-6,
                "step {delta} for gradient {g0}"
            );
            assert_eq!(delta.signum(), -g0.signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut p = Tensor::new(vec![2], vec![0.5, -0.25]);
        let g1 = Tensor::new(vec![2], vec![1.0, -2.0]);
        let zero = Tensor::zeros(vec![2]);
        let mut state = OptState::new(OptimKind::Adam, &[2]);
        optimizer_step(&mut state, &mut [&mut p], &[&g1], 0.01).unwrap();
        let after_first = p.clone();
        let m_before = state.moments[0].m.clone();
        optimizer_step(&mut state, &mut [&mut p], &[&zero], 0.0).unwrap();
        assert_eq!(p.data(), after_first.data());
        for (new, old) in state.moments[0].m.iter().zip(&m_before) {
            assert!((new - old * ADAM_BETA1).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_refuses_step() {
        let mut p = Tensor::new(vec![1], vec![1.0]);
        let g = Tensor::new(vec![1], vec![f64::NAN]);
        let mut state = OptState::new(OptimKind::Sgd, &[1]);
        let err = optimizer_step(&mut state, &mut [&mut p], &[&g], 0.1).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { param: 0 }));
        assert_eq!(p.data()[0], 1.0);
    }
}
