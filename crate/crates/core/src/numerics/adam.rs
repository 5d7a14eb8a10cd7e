use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(100.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamReport {
    pub applied: bool,
    pub grad_norm: f64,
}

/// One bias-corrected adaptive-moment update. A non-finite gradient leaves
/// both parameters and state untouched and is reported with `applied == false`.
pub fn adam_step(params: &mut ParamVector, grad: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<AdamReport, NumericsError> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(NumericsError::Shape { expected: params.len(), got: grad.len(), what: "gradient length" });
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Ok(AdamReport { applied: false, grad_norm: norm });
    }
    let scale = match cfg.clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params.values_mut().iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        let g = g * scale;
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(AdamReport { applied: true, grad_norm: norm })
}

/// Optimizer bundle for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamVector) -> Self {
        Self { config, state: AdamState::new(params.len()) }
    }

    pub fn step(&mut self, params: &mut ParamVector, grad: &[f64]) -> Result<AdamReport, NumericsError> {
        adam_step(params, grad, &mut self.state, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(vals: &[f64]) -> ParamVector {
        let mut p = ParamVector::new();
        let id = p.add_constant("x", &[vals.len()], 0.0);
        p.slice_mut(id).copy_from_slice(vals);
        p
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = params(&[1.0, -2.0]);
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::with_lr(0.1)).unwrap();
        assert_eq!(p.values(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let mut p = params(&[0.0, 0.0, 0.0]);
        let mut s = AdamState::new(3);
        let cfg = AdamConfig::with_lr(0.01);
        adam_step(&mut p, &[0.5, -3.0, 1e-3], &mut s, &cfg).unwrap();
        // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
        for (got, g) in p.values().iter().zip([0.5f64, -3.0, 1e-3]) {
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = params(&[0.0]);
        let mut s = AdamState::new(1);
        let cfg = AdamConfig::with_lr(0.01);
        let mut prev = 0.0;
        for _ in 0..100 {
            adam_step(&mut p, &[2.0], &mut s, &cfg).unwrap();
            assert!(p.values()[0] < prev);
            prev = p.values()[0];
        }
    }

    #[test]
    fn deterministic_given_same_state() {
        let mut a = params(&[0.3, 0.1]);
        let mut b = a.clone();
        let (mut sa, mut sb) = (AdamState::new(2), AdamState::new(2));
        let cfg = AdamConfig::with_lr(1e-3);
        for g in [[0.1, -0.2], [0.3, 0.0], [-1.0, 5.0]] {
            adam_step(&mut a, &g, &mut sa, &cfg).unwrap();
            adam_step(&mut b, &g, &mut sb, &cfg).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut p = params(&[1.0]);
        let mut s = AdamState::new(1);
        let r = adam_step(&mut p, &[f64::NAN], &mut s, &AdamConfig::with_lr(0.1)).unwrap();
        assert!(!r.applied);
        assert_eq!(p.values(), &[1.0]);
        assert_eq!(s.steps(), 0);
    }

    #[test]
    fn clipping_bounds_the_effective_gradient() {
        let mut p = params(&[0.0, 0.0]);
        let mut s = AdamState::new(2);
        let cfg = AdamConfig { clip_norm: Some(1.0), ..AdamConfig::with_lr(0.1) };
        let r = adam_step(&mut p, &[300.0, 400.0], &mut s, &cfg).unwrap();
        assert_eq!(r.grad_norm, 500.0);
        assert!(p.is_finite());
    }
}
