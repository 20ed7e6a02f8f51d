use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Bias-corrected Adam without weight decay or learning-rate schedule.
#[derive(Debug, Clone)]
pub struct Adam<P> {
    pub config: AdamConfig,
    m: P,
    v: P,
    step: u64,
    names: Vec<String>,
}

impl<P> Adam<P> {
    pub fn step_count(&self) -> u64 {
        self.step
    }
}

impl<P: Clone> Adam<P> {
    /// `names` label tensors in [`ParamSet::tensors`] order for error messages.
    pub fn new<T: Scalar>(config: AdamConfig, params: &P, names: Vec<String>) -> Result<Self>
    where
        P: ParamSet<T>,
    {
        config.validate()?;
        let m = params.zeros_like();
        let v = params.zeros_like();
        Ok(Adam { config, m, v, step: 0, names })
    }

    /// Applies one update. Parameters are left untouched if any gradient is
    /// non-finite.
    pub fn step<T: Scalar>(&mut self, params: &mut P, grads: &P) -> Result<()>
    where
        P: ParamSet<T>,
    {
        for (k, (name, g)) in grads.tensors().into_iter().enumerate() {
            if !g.is_finite() {
                let layer = self.names.get(k).cloned().unwrap_or_else(|| name.to_string());
                return Err(Error::Numeric { layer, detail: format!("non-finite gradient at step {}", self.step + 1) });
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let corr1 = T::one() - T::of(c.beta1.powi(self.step.min(i32::MAX as u64) as i32));
        let corr2 = T::one() - T::of(c.beta2.powi(self.step.min(i32::MAX as u64) as i32));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs) {
            let p = p.as_mut_slice();
            let g = g.as_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm<T: Scalar, P: ParamSet<T>>(grads: &mut P, max_norm: T) -> T {
    let norm = grads.tensors().iter().map(|(_, t)| t.sum_squares()).fold(T::zero(), |a, b| a + b).sqrt();
    if norm > max_norm && norm > T::zero() {
        grads.scale_all(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DenseParams, Matrix};

    fn dense(v: f64) -> DenseParams<f64> {
        DenseParams { w: Matrix::filled(2, 2, v), b: Matrix::filled(2, 1, v) }
    }

    #[test]
    fn first_step_is_lr_over_one_plus_eps() {
        let mut p = dense(0.5);
        let g = dense(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &p, vec![]).unwrap();
        adam.step(&mut p, &g).unwrap();
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!(p.w.as_slice().iter().all(|&x| (x - expected).abs() < 1e-15));
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut p = dense(0.25);
        let g = dense(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &p, vec![]).unwrap();
        for _ in 0..10 {
            adam.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, dense(0.25));
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = dense(0.0);
        let mut g = dense(0.0);
        g.b.set(1, 0, f64::NAN);
        let names = vec!["head.w".to_string(), "head.b".to_string()];
        let mut adam = Adam::new(AdamConfig::default(), &p, names).unwrap();
        let err = adam.step(&mut p, &g).unwrap_err();
        assert!(matches!(err, Error::Numeric { ref layer, .. } if layer == "head.b"));
        assert_eq!(adam.step_count(), 0);
        assert_eq!(p, dense(0.0));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = dense(3.0);
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - (6.0f64 * 9.0).sqrt()).abs() < 1e-12);
        let after = g.tensors().iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }
}
