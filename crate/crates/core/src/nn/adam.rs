use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Step counter and moment estimates, one accumulator per parameter slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0, m: Vec::new(), v: Vec::new() }
    }
}

/// One bias-corrected Adam update. Moments are allocated on the first call.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[Vec<f64>], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(shape_err!("{} parameter slices, {} gradients", params.len(), grads.len()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(shape_err!("parameter {i}: {} values, gradient {}", p.len(), g.len()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!("non-finite gradient in parameter {i}")));
        }
    }
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != grads.len() || state.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
        return Err(shape_err!("optimizer state does not match parameters"));
    }

    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut [&mut p], &[vec![0.0, 0.0]], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_by_hand() {
        // t=1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1, step = lr / (1 + eps).
        let mut p = vec![0.0];
        let mut s = AdamState::new(AdamConfig { lr: 0.1, ..AdamConfig::default() });
        adam_step(&mut [&mut p], &[vec![1.0]], &mut s).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(AdamConfig::default());
        let err = adam_step(&mut [&mut p], &[vec![f64::NAN]], &mut s).unwrap_err();
        assert!(matches!(err, Error::Numerics(_)));
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = vec![0.5, -0.5];
            let mut s = AdamState::new(AdamConfig::default());
            let mut traj = Vec::new();
            for k in 0..50 {
                let g = vec![(k as f64).sin(), p[0] * p[1]];
                adam_step(&mut [&mut p], &[g], &mut s).unwrap();
                traj.push(p.clone());
            }
            traj
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn step_is_bounded(grads in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 1..30)) {
            let cfg = AdamConfig::default();
            let bound = cfg.lr / (1.0 - cfg.beta1) * (1.0 + 1e-8);
            let mut p = vec![0.0; 3];
            let mut s = AdamState::new(cfg);
            for g in grads {
                let before = p.clone();
                adam_step(&mut [&mut p], &[g], &mut s).unwrap();
                for (a, b) in p.iter().zip(&before) {
                    prop_assert!((a - b).abs() <= bound);
                }
            }
        }
    }
}
