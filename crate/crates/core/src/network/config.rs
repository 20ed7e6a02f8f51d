use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::dropout::validate_rate;
use crate::nn::init::BiasScope;
use crate::nn::{GateActivation, GruReading, PeepholeMode};

/// Which fusion vectors feed the domain classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DomainInput {
    /// Only the last timestep `z_T`.
    #[default]
    FinalStep,
    /// Every `z_t`, with the domain loss averaged over time.
    EveryStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub phi_dim: usize,
    pub gamma_dim: usize,
    pub eta_dim: usize,
    pub h_phi: usize,
    pub h_gamma: usize,
    pub h_a: usize,
    pub h_eta: usize,
    pub h_z: usize,
    pub num_classes: usize,
    pub recurrent_dropout: f64,
    pub output_dropout: f64,
    pub gate_activation: GateActivation,
    pub peephole_mode: PeepholeMode,
    pub gru_reading: GruReading,
    /// Initial value of every recurrent-layer bias.
    pub recurrent_bias_init: f64,
    pub recurrent_bias_scope: BiasScope,
    pub domain_hidden: usize,
    pub domain_input: DomainInput,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            phi_dim: 13,
            gamma_dim: 8,
            eta_dim: 3,
            h_phi: 128,
            h_gamma: 64,
            h_a: 128,
            h_eta: 16,
            h_z: 64,
            num_classes: 5,
            recurrent_dropout: 0.6,
            output_dropout: 0.7,
            gate_activation: GateActivation::AsPrinted,
            peephole_mode: PeepholeMode::FullMatrix,
            gru_reading: GruReading::Standard,
            recurrent_bias_init: 1.0,
            recurrent_bias_scope: BiasScope::All,
            domain_hidden: 32,
            domain_input: DomainInput::FinalStep,
        }
    }
}

impl NetworkConfig {
    /// Small sizes for tests and desk-scale experiments.
    pub fn compact(h: usize) -> Self {
        NetworkConfig {
            h_phi: h,
            h_gamma: h,
            h_a: h,
            h_eta: h.div_ceil(2).max(1),
            h_z: h,
            domain_hidden: h,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("phi_dim", self.phi_dim),
            ("gamma_dim", self.gamma_dim),
            ("eta_dim", self.eta_dim),
            ("h_phi", self.h_phi),
            ("h_gamma", self.h_gamma),
            ("h_a", self.h_a),
            ("h_eta", self.h_eta),
            ("h_z", self.h_z),
            ("domain_hidden", self.domain_hidden),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be at least 1")));
            }
        }
        if self.num_classes != 5 {
            return Err(Error::Config(format!("num_classes must be 5, got {}", self.num_classes)));
        }
        validate_rate(self.recurrent_dropout)?;
        validate_rate(self.output_dropout)?;
        Ok(())
    }

    pub fn dropout_active(&self) -> bool {
        self.recurrent_dropout > 0.0 || self.output_dropout > 0.0
    }
}
