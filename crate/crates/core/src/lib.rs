//! Domain-adversarial LSTM-GRU fusion networks for driving manoeuvre
//! anticipation, with the feature pipeline, synthetic data with controllable
//! domain shift, and the evaluation protocols used to benchmark them.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gradcheck;
pub mod losses;
pub mod network;
pub mod nn;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};

pub type Model64 = network::DaRnnModel<f64>;
pub type Model32 = network::DaRnnModel<f32>;
pub type Params64 = network::DaRnnParams<f64>;
pub type Params32 = network::DaRnnParams<f32>;
