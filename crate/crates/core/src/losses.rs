//! Exponential anticipation loss, domain cross-entropy, gradient reversal and
//! per-sample masking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped to at least this value before taking a log.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnticipationLossConfig {
    pub decay_rate: f64,
}

impl Default for AnticipationLossConfig {
    fn default() -> Self {
        AnticipationLossConfig { decay_rate: 0.9 }
    }
}

impl AnticipationLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_rate > 0.0 && self.decay_rate.is_finite()) {
            return Err(Error::Config(format!("decay_rate must be positive, got {}", self.decay_rate)));
        }
        Ok(())
    }

    /// `exp(-decay (T - t))` for 1-based `t`.
    #[inline]
    pub fn weight<T: Scalar>(&self, t: usize, len: usize) -> T {
        T::of((-self.decay_rate * (len - t) as f64).exp())
    }

    pub fn weights<T: Scalar>(&self, len: usize) -> Vec<T> {
        (1..=len).map(|t| self.weight(t, len)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnticipationLoss<T> {
    pub loss: T,
    /// Gradient on the softmax logits at every timestep.
    pub dlogits: Vec<Vec<T>>,
    /// Number of probabilities that had to be clamped.
    pub clamped: usize,
}

/// `Σ_t -exp(-decay (T - t)) log p_t[true_class]` over a `T x J` trajectory.
pub fn anticipation_loss<T: Scalar>(
    probs: &[Vec<T>],
    true_class: usize,
    config: &AnticipationLossConfig,
) -> Result<AnticipationLoss<T>> {
    config.validate()?;
    if probs.is_empty() {
        return Err(Error::Usage("anticipation loss over an empty trajectory".into()));
    }
    let classes = probs[0].len();
    if true_class >= classes {
        return Err(Error::Usage(format!("true class {true_class} out of range for {classes} classes")));
    }
    let len = probs.len();
    let eps = T::of(PROB_EPS);
    let mut loss = T::zero();
    let mut clamped = 0;
    let mut dlogits = Vec::with_capacity(len);
    for (idx, row) in probs.iter().enumerate() {
        if row.len() != classes {
            return Err(Error::Shape(format!("trajectory row {idx} has {} classes, expected {classes}", row.len())));
        }
        let w: T = config.weight(idx + 1, len);
        let mut p = row[true_class];
        if p < eps || p.is_nan() {
            p = eps;
            clamped += 1;
        }
        loss += -w * p.ln();
        dlogits.push(
            row.iter()
                .enumerate()
                .map(|(j, &pj)| if j == true_class { w * (pj - T::one()) } else { w * pj })
                .collect(),
        );
    }
    Ok(AnticipationLoss { loss, dlogits, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn label(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }
}

/// Binary cross-entropy on a sigmoid output `prob` of the "target" domain.
///
/// Returns `(loss, dloss/dlogit)` where the logit is the pre-sigmoid input;
/// the gradient is `prob - label`.
pub fn domain_loss<T: Scalar>(prob: T, domain: Domain) -> (T, T) {
    let eps = T::of(PROB_EPS);
    let p = prob.max(eps).min(T::one() - eps);
    let y = T::of(domain.label());
    let loss = -(y * p.ln() + (T::one() - y) * (T::one() - p).ln());
    (loss, prob - y)
}

/// Identity forward, `-λ · upstream` backward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal<T> {
    pub lambda: T,
}

impl<T: Scalar> GradientReversal<T> {
    pub fn new(lambda: T) -> Self {
        GradientReversal { lambda }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        x.to_vec()
    }

    pub fn backward(&self, upstream: &[T]) -> Vec<T> {
        upstream.iter().map(|&g| -self.lambda * g).collect()
    }
}

/// Mean of `losses` over samples whose weight is 1. All-zero weights give 0.
pub fn apply_sample_mask<T: Scalar>(losses: &[T], weights: &[T]) -> Result<T> {
    if losses.len() != weights.len() {
        return Err(Error::Shape(format!("{} losses but {} weights", losses.len(), weights.len())));
    }
    let active: T = weights.iter().copied().sum();
    if active == T::zero() {
        return Ok(T::zero());
    }
    let total: T = losses.iter().zip(weights).map(|(&l, &w)| l * w).sum();
    Ok(total / active)
}

/// Gradient scale applied to each sample's manoeuvre loss: `w_i / Σ w`.
pub fn sample_mask_scales<T: Scalar>(weights: &[T]) -> Vec<T> {
    let active: T = weights.iter().copied().sum();
    if active == T::zero() {
        return vec![T::zero(); weights.len()];
    }
    weights.iter().map(|&w| w / active).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialConfig {
    pub lambda: f64,
    pub enabled: bool,
    /// Linear ramp of λ from 0 over this many epochs; 0 disables the ramp.
    pub warmup_epochs: usize,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig { lambda: 1.10, enabled: true, warmup_epochs: 0 }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }

    /// λ in effect during the 0-based `epoch`.
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        if self.warmup_epochs == 0 || epoch >= self.warmup_epochs {
            self.lambda
        } else {
            self.lambda * epoch as f64 / self.warmup_epochs as f64
        }
    }
}

/// `L_y - λ L_d`, the reported objective.
pub fn total_loss<T: Scalar>(l_y: T, l_d: T, lambda: T) -> T {
    l_y - lambda * l_d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_weight_is_one() {
        let cfg = AnticipationLossConfig::default();
        let probs = vec![vec![0.1f64, 0.6, 0.1, 0.1, 0.1]];
        let out = anticipation_loss(&probs, 1, &cfg).unwrap();
        assert_eq!(out.loss, -(0.6f64.ln()));
        assert_eq!(cfg.weight::<f64>(5, 5), 1.0);
    }

    #[test]
    fn consecutive_weight_ratio() {
        let cfg = AnticipationLossConfig::default();
        let w: Vec<f64> = cfg.weights(10);
        for pair in w.windows(2) {
            assert!((pair[1] / pair[0] - 0.9f64.exp()).abs() < 1e-9);
            assert!(pair[1] > pair[0]);
        }
        assert!((0.9f64.exp() - 2.45960).abs() < 1e-5);
    }

    #[test]
    fn uniform_three_step_fixture() {
        let probs = vec![vec![0.2f64; 5]; 3];
        let out = anticipation_loss(&probs, 2, &AnticipationLossConfig::default()).unwrap();
        let expected = ((-1.8f64).exp() + (-0.9f64).exp() + 1.0) * -(0.2f64.ln());
        assert!((out.loss - expected).abs() < 1e-12);
        assert!((out.loss - 2.52982).abs() < 1e-4);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let probs = vec![vec![1.0f64, 0.0, 0.0, 0.0, 0.0]; 2];
        let out = anticipation_loss(&probs, 3, &AnticipationLossConfig::default()).unwrap();
        assert!(out.loss.is_finite());
        assert_eq!(out.clamped, 2);
    }

    #[test]
    fn bad_class_is_rejected() {
        let probs = vec![vec![0.2f64; 5]];
        assert!(anticipation_loss(&probs, 5, &AnticipationLossConfig::default()).is_err());
    }

    #[test]
    fn domain_loss_values() {
        let (l, g) = domain_loss(0.5f64, Domain::Source);
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert_eq!(g, 0.5);
        let (l, _) = domain_loss(0.9f64, Domain::Source);
        assert!((l - 2.302585).abs() < 1e-6);
        assert!(domain_loss(1.0f64, Domain::Target).0 <= 1e-11);
        assert!(domain_loss(0.0f64, Domain::Source).0 <= 1e-11);
    }

    #[test]
    fn gradient_reversal_contract() {
        let grl = GradientReversal::new(1.10f64);
        let x = [1.5, -2.0];
        let y = grl.forward(&x);
        assert_eq!(y[0].to_bits(), x[0].to_bits());
        assert_eq!(y[1].to_bits(), x[1].to_bits());
        let back = grl.backward(&[0.5, -0.2]);
        assert_eq!(back, vec![-1.10 * 0.5, 1.10 * 0.2]);
        assert!((back[0] + 0.55).abs() < 1e-15 && (back[1] - 0.22).abs() < 1e-15);
        let silent = GradientReversal::new(0.0f64).backward(&[0.5, -0.2]);
        assert!(silent.iter().all(|&v| v == 0.0));
        let once = GradientReversal::new(1.0f64);
        assert_eq!(once.backward(&once.backward(&[0.3, -4.0])), vec![0.3, -4.0]);
    }

    #[test]
    fn mask_mean() {
        assert_eq!(apply_sample_mask(&[2.0f64, 7.0], &[1.0, 0.0]).unwrap(), 2.0);
        assert_eq!(apply_sample_mask(&[2.0f64, 4.0], &[1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(apply_sample_mask(&[2.0f64, 4.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(sample_mask_scales(&[1.0f64, 0.0, 1.0]), vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn total_loss_arithmetic() {
        assert_eq!(total_loss(1.0f64, 0.5, 0.0), 1.0);
        assert!((total_loss(1.0f64, 0.5, 1.1) - 0.45).abs() < 1e-15);
        assert_eq!(total_loss(1.0f64, 0.25, 1.0), 0.75);
    }

    #[test]
    fn warmup_schedule() {
        let cfg = AdversarialConfig { lambda: 1.0, enabled: true, warmup_epochs: 4 };
        assert_eq!(cfg.lambda_at(0), 0.0);
        assert_eq!(cfg.lambda_at(2), 0.5);
        assert_eq!(cfg.lambda_at(10), 1.0);
    }
}
