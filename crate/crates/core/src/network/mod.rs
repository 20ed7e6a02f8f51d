//! The fusion network, its batch loss, and checkpoints.

pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod model;

pub use batch::{full_forward_backward, mean_loss, two_pass_reference, BatchItem, BatchOutcome, BatchSettings};
pub use checkpoint::Checkpoint;
pub use config::{DomainInput, NetworkConfig};
pub use model::{DaRnnModel, DaRnnParams, ForwardPass, Mode, SequenceInput, DOMAIN_LAYERS, EXTRACTOR_LAYERS, HEAD_LAYER};
