//! Adam with bias correction, over any [`TensorSet`].

use thiserror::Error;

use crate::model::TensorSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid Adam hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("tensor shapes do not match the optimizer state: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in tensor {tensor} at index {index}")]
    NonFiniteGradient { tensor: usize, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::InvalidHyperparams(m));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    /// First moments, one per tensor.
    pub m: Vec<Vec<f64>>,
    /// Second moments, one per tensor.
    pub v: Vec<Vec<f64>>,
}

pub fn adam_init<P: TensorSet + ?Sized>(params: &P, config: AdamConfig) -> Result<AdamState, OptimError> {
    config.validate()?;
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    Ok(AdamState {
        config,
        t: 0,
        m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
    })
}

impl AdamState {
    fn check_shapes(&self, tensors: &[&[f64]], what: &str) -> Result<(), OptimError> {
        if tensors.len() != self.m.len() {
            return Err(OptimError::ShapeMismatch(format!(
                "{what} has {} tensors, state has {}",
                tensors.len(),
                self.m.len()
            )));
        }
        for (i, (t, m)) in tensors.iter().zip(&self.m).enumerate() {
            if t.len() != m.len() {
                return Err(OptimError::ShapeMismatch(format!(
                    "{what} tensor {i} has {} values, state has {}",
                    t.len(),
                    m.len()
                )));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. Parameters are left untouched on error.
pub fn adam_step<P, G>(state: &mut AdamState, params: &mut P, grads: &G) -> Result<(), OptimError>
where
    P: TensorSet + ?Sized,
    G: TensorSet + ?Sized,
{
    let g_tensors = grads.tensors();
    state.check_shapes(&g_tensors, "gradients")?;
    state.check_shapes(&params.tensors(), "params")?;
    for (ti, g) in g_tensors.iter().enumerate() {
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(OptimError::NonFiniteGradient { tensor: ti, index });
        }
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (ti, p) in params.tensors_mut().into_iter().enumerate() {
        let g = g_tensors[ti];
        let m = &mut state.m[ti];
        let v = &mut state.v[ti];
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig, Variant};

    #[test]
    fn init_is_zeroed_and_shaped() {
        let params = init_params(&ModelConfig::new(Variant::Cake, 3, 16, 3)).unwrap();
        let s = adam_init(&params, AdamConfig::default()).unwrap();
        assert_eq!(s.t, 0);
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        assert_eq!(s.m.iter().map(Vec::len).collect::<Vec<_>>(), shapes);
        assert!(s.m.iter().chain(&s.v).all(|t| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn rejects_bad_hyperparams() {
        let p = vec![0.0];
        for cfg in [
            AdamConfig {
                beta1: 1.0,
                ..Default::default()
            },
            AdamConfig {
                beta2: -0.1,
                ..Default::default()
            },
            AdamConfig {
                lr: 0.0,
                ..Default::default()
            },
            AdamConfig {
                eps: 0.0,
                ..Default::default()
            },
        ] {
            assert!(adam_init(&p, cfg).is_err());
        }
    }

    #[test]
    fn zero_grad_keeps_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = adam_init(&p, AdamConfig::default()).unwrap();
        adam_step(&mut s, &mut p, &vec![0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = vec![0.5, 0.5, 0.5];
        let g = vec![3.0, -0.1, 250.0];
        let mut s = adam_init(&p, AdamConfig::default()).unwrap();
        adam_step(&mut s, &mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            let delta = pi - 0.5;
            assert!((delta + 1e-3 * gi.signum()).abs() < 1e-3 * 1e-6, "{delta}");
        }
    }

    #[test]
    fn converges_on_a_parabola() {
        let mut theta = vec![1.0];
        let mut s = adam_init(
            &theta,
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        for _ in 0..100 {
            let g = vec![2.0 * theta[0]];
            adam_step(&mut s, &mut theta, &g).unwrap();
        }
        assert!(theta[0].abs() < 0.05, "{}", theta[0]);
    }

    #[test]
    fn zero_betas_give_sign_steps() {
        let cfg = AdamConfig {
            beta1: 0.0,
            beta2: 0.0,
            lr: 0.2,
            eps: 1e-8,
        };
        let mut p = vec![0.0, 0.0];
        let mut s = adam_init(&p, cfg).unwrap();
        for g in [[0.5, -4.0], [-2.0, 1.0]] {
            let before = p.clone();
            adam_step(&mut s, &mut p, &g.to_vec()).unwrap();
            for i in 0..2 {
                let want = before[i] - 0.2 * g[i] / (g[i].abs() + 1e-8);
                assert!((p[i] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_gradient_halts() {
        let mut p = vec![1.0, 1.0];
        let mut s = adam_init(&p, AdamConfig::default()).unwrap();
        let err = adam_step(&mut s, &mut p, &vec![0.0, f64::NAN]).unwrap_err();
        assert_eq!(err, OptimError::NonFiniteGradient { tensor: 0, index: 1 });
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s.t, 0);
        assert!(adam_step(&mut s, &mut p, &vec![0.0]).is_err());
    }
}
