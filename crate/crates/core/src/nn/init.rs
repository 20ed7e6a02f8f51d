use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::scalar::Scalar;

/// Which recurrent biases start at the configured value; the others start at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BiasScope {
    /// Every bias of every recurrent layer.
    #[default]
    All,
    /// `b_f` of each LSTM and `b_z` of the GRU.
    ForgetGate,
}

impl BiasScope {
    pub(crate) fn value(self, tensor: &str, gate: &str, bias: f64) -> f64 {
        match self {
            BiasScope::All => bias,
            BiasScope::ForgetGate if tensor == gate => bias,
            BiasScope::ForgetGate => 0.0,
        }
    }
}

/// Glorot-uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-limit..limit))).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

/// Uniform init in (-scale, scale), used by gradient checks.
pub fn uniform<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix<T> {
    let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-scale..scale))).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}
