//! AdamW with decoupled weight decay.

use std::collections::HashMap;

use super::{Float, Parameter};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment buffers for one parameter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One AdamW update of `param` in place.
///
/// The decay term scales the parameter directly (`p -= lr·wd·p`) and never
/// enters the moment estimates.
pub fn adamw_update(
    param: &mut [Float],
    grad: &[Float],
    state: &mut AdamState,
    cfg: &AdamWConfig,
    lr: f64,
) {
    debug_assert_eq!(param.len(), grad.len());
    if state.m.len() != param.len() {
        *state = AdamState::zeros(param.len());
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for i in 0..param.len() {
        let g = grad[i] as f64;
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        let mut p = param[i] as f64;
        p -= lr * cfg.weight_decay * p;
        p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        param[i] = p as Float;
    }
}

/// Optimizer state for a set of named parameters.
#[derive(Clone, Debug, Default)]
pub struct AdamW {
    pub config: AdamWConfig,
    states: HashMap<String, AdamState>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            states: HashMap::new(),
        }
    }

    /// Update every parameter from its accumulated gradient. Parameters
    /// without a gradient are treated as having a zero gradient.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Parameter>,
        lr: f64,
    ) -> Result<()> {
        for p in params {
            let grad = p
                .tensor
                .grad()
                .unwrap_or_else(|| vec![0.0; p.tensor.numel()]);
            let mut values = p.data().to_vec();
            let state = self
                .states
                .entry(p.name.clone())
                .or_insert_with(|| AdamState::zeros(values.len()));
            if state.m.len() != values.len() {
                return Err(Error::Contract(format!(
                    "parameter {} changed size",
                    p.name
                )));
            }
            adamw_update(&mut values, &grad, state, &self.config, lr);
            p.set_data(values)?;
        }
        Ok(())
    }

    pub fn state(&self, name: &str) -> Option<&AdamState> {
        self.states.get(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_decay() -> AdamWConfig {
        AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_grad_no_decay_leaves_param() {
        let mut p = [0.7 as Float, -1.3];
        let mut s = AdamState::zeros(2);
        adamw_update(&mut p, &[0.0, 0.0], &mut s, &no_decay(), 0.1);
        assert_eq!(p, [0.7, -1.3]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn decay_only_step() {
        let mut p = [1.0 as Float];
        let mut s = AdamState::zeros(1);
        let cfg = AdamWConfig {
            weight_decay: 0.01,
            ..Default::default()
        };
        adamw_update(&mut p, &[0.0], &mut s, &cfg, 0.1);
        assert!((p[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn quadratic_matches_scripted_recurrence() {
        // f(x) = x², gradient 2x, written out step by step.
        let (lr, b1, b2, eps, wd) = (0.05f64, 0.9f64, 0.999f64, 1e-8f64, 0.01f64);
        let mut x_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * x_ref;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x_ref = x_ref * (1.0 - lr * wd) - lr * mh / (vh.sqrt() + eps);
            expected.push(x_ref);
        }

        let cfg = AdamWConfig {
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: wd,
        };
        let mut x = [1.0 as Float];
        let mut s = AdamState::zeros(1);
        for want in expected {
            let g = [2.0 * x[0]];
            adamw_update(&mut x, &g, &mut s, &cfg, lr);
            assert!((x[0] as f64 - want).abs() <= 1e-10, "{} vs {want}", x[0]);
        }
    }

    #[test]
    fn optimizer_steps_named_parameters() {
        let mut p = Parameter::new("w", vec![1.0, 2.0], &[2]).unwrap();
        p.tensor.mul(&p.tensor).unwrap().sum().backward().unwrap();
        let mut opt = AdamW::new(no_decay());
        opt.step([&mut p], 0.1).unwrap();
        // first Adam step moves each coordinate by ~lr against the gradient sign
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
        assert!((p.data()[1] - 1.9).abs() < 1e-6);
        assert!(p.tensor.grad().is_none());
        assert_eq!(opt.state("w").unwrap().step, 1);
    }
}
