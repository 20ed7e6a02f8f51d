//! Raw tracker exports to per-frame feature vectors.

pub mod butterworth;
pub mod environment;
pub mod gaze;
pub mod histogram;
pub mod normalize;
pub mod pipeline;
pub mod raw;

use serde::{Deserialize, Serialize};

pub use butterworth::ButterworthLowpass;
pub use environment::{environment_features, parse_context_csv, read_context_csv, ContextRecord};
pub use gaze::{gaze_bin, gaze_features, GazeConfig, GazeScaling, GAMMA_DIM};
pub use histogram::{angular_bin, head_features, horizontal_bin, landmark_motion_histograms, motion_angle, PHI_DIM};
pub use normalize::{fit_normalization, NormalizationStats};
pub use pipeline::{featurize_dir, featurize_sequence, FeatureLog};
pub use raw::{parse_frames_csv, read_frames_csv, RawFrame, NUM_LANDMARKS};

pub const ETA_DIM_WITH_SPEED: usize = 4;
pub const ETA_DIM: usize = 3;

/// Head, gaze and environment features of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub phi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Negate horizontal landmark motion (camera mirrored).
    pub mirror_x: bool,
    pub exclude_speed: bool,
    pub gaze: GazeConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { mirror_x: false, exclude_speed: true, gaze: GazeConfig::default() }
    }
}

impl FeatureConfig {
    pub fn eta_dim(&self) -> usize {
        if self.exclude_speed {
            ETA_DIM
        } else {
            ETA_DIM_WITH_SPEED
        }
    }
}
