//! Dense linear algebra and recurrent layer primitives with exact backward passes.

pub mod activation;
pub mod dense;
pub mod dropout;
pub mod gru;
pub mod init;
pub mod lstm;
pub mod matrix;
pub mod params;

pub use activation::{argmax, sigmoid, softmax};
pub use dense::{dense_softmax, dense_softmax_backward, dense_tanh, dense_tanh_backward, DenseParams};
pub use dropout::make_dropout_mask;
pub use gru::{gru_backward, gru_backward_sequence, gru_forward_sequence, gru_step, GruMasks, GruParams, GruReading, GruTrace};
pub use lstm::{
    lstm_backward, lstm_backward_sequence, lstm_forward_sequence, lstm_step, GateActivation, LstmMasks, LstmParams,
    LstmTrace, PeepholeMode,
};
pub use init::BiasScope;
pub use matrix::Matrix;
pub use params::ParamSet;
