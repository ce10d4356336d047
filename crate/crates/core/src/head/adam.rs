use std::fmt;
use std::str::FromStr;

use super::{HeadError, HeadParams, TENSOR_NAMES};

/// How the `decay` coefficient is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DecayMode {
    /// `decay * param` is added to the gradient before the moment update.
    #[default]
    L2,
    /// The step size at update `t` is `lr / (1 + decay * (t - 1))`.
    LearningRate,
}

impl DecayMode {
    pub fn name(self) -> &'static str {
        match self {
            DecayMode::L2 => "l2",
            DecayMode::LearningRate => "lr",
        }
    }
}

impl fmt::Display for DecayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecayMode {
    type Err = HeadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "l2" | "weight" => Ok(DecayMode::L2),
            "lr" | "learning-rate" => Ok(DecayMode::LearningRate),
            other => Err(HeadError::InvalidHyper(format!("unknown decay mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay: f64,
    pub decay_mode: DecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, decay: 0.0, decay_mode: DecayMode::L2 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), HeadError> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.decay >= 0.0
            && self.decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(HeadError::InvalidHyper(format!("{self:?}")))
        }
    }

    /// Step size for update number `t` (1-based).
    fn step_size(&self, t: u64) -> f64 {
        match self.decay_mode {
            DecayMode::L2 => self.lr,
            DecayMode::LearningRate => self.lr / (1.0 + self.decay * (t - 1) as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: HeadParams,
    pub v: HeadParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &HeadParams) -> Self {
        Self { m: HeadParams::zeros(params.dims()), v: HeadParams::zeros(params.dims()), t: 0 }
    }
}

/// One bias-corrected Adam update of a flat tensor at step `t` (already incremented).
fn update(config: &AdamConfig, t: u64, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
    let c1 = 1.0 - config.beta1.powi(t as i32);
    let c2 = 1.0 - config.beta2.powi(t as i32);
    let lr = config.step_size(t);
    for j in 0..p.len() {
        let grad = match config.decay_mode {
            DecayMode::L2 => g[j] + config.decay * p[j],
            DecayMode::LearningRate => g[j],
        };
        m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * grad;
        v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * grad * grad;
        let m_hat = m[j] / c1;
        let v_hat = v[j] / c2;
        p[j] -= lr * m_hat / (v_hat.sqrt() + config.eps);
    }
}

/// Applies one Adam step. A non-finite gradient aborts before anything is
/// modified.
pub fn adam_step(
    params: &mut HeadParams,
    grads: &HeadParams,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), HeadError> {
    if grads.dims() != params.dims() || state.m.dims() != params.dims() || state.v.dims() != params.dims() {
        return Err(HeadError::ShapeMismatch);
    }
    for (name, g) in TENSOR_NAMES.iter().zip(grads.tensors()) {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(HeadError::NonFiniteGradient { tensor: name, step: state.t + 1 });
        }
    }
    state.t += 1;
    let t = state.t;
    let AdamState { m, v, .. } = state;
    for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(m.tensors_mut()).zip(v.tensors_mut()) {
        update(config, t, p, g, m, v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::HeadDims;

    fn scalar_params(value: f64) -> HeadParams {
        // input 1, hidden 1, classes 1 keeps every tensor tiny.
        let mut p = HeadParams::zeros(HeadDims { input: 1, hidden: 1, classes: 1 });
        let n = p.num_params();
        p.set_flat(&vec![value; n]).unwrap();
        p
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar_params(1.0);
        let g = scalar_params(0.5);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        for x in p.to_flat() {
            assert!((x - 1.0 + 0.001).abs() < 1e-9);
        }
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_noop() {
        let mut p = scalar_params(0.3);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar_params(0.0), &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = scalar_params(0.3);
        let mut g = scalar_params(0.1);
        g.dense_b[0] = f64::NAN;
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, HeadError::NonFiniteGradient { tensor: "dense.b", step: 1 }));
        assert_eq!(s.t, 0);
        assert_eq!(p, scalar_params(0.3));
    }

    #[test]
    fn l2_decay_pulls_toward_zero() {
        let mut p = scalar_params(2.0);
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig { decay: 0.1, ..AdamConfig::default() };
        adam_step(&mut p, &scalar_params(0.0), &mut s, &cfg).unwrap();
        assert!(p.to_flat().iter().all(|&x| (x - (2.0 - 0.001)).abs() < 1e-9));
    }

    #[test]
    fn lr_decay_shrinks_later_steps() {
        let cfg = AdamConfig { decay: 1.0, decay_mode: DecayMode::LearningRate, ..AdamConfig::default() };
        let mut p = scalar_params(0.0);
        let mut s = AdamState::new(&p);
        let g = scalar_params(1.0);
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        let first = p.dense_b[0];
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        // Constant gradient: both bias-corrected ratios are 1, so the second step is lr/2.
        assert!((p.dense_b[0] - first + 0.0005).abs() < 1e-9);
    }
}
