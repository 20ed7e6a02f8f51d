use serde::{Deserialize, Serialize};

use super::butterworth::ButterworthLowpass;
use super::raw::RawFrame;
use crate::error::Result;

pub const GAZE_BINS: usize = 4;
pub const GAMMA_DIM: usize = 2 * GAZE_BINS;

/// How filtered gaze components are mapped into `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GazeScaling {
    /// Divide by the largest `|x|` or `|y|` seen so far in the sequence.
    #[default]
    RunningMaxAbs,
    /// Divide by the largest `|x|` or `|y|` over the whole sequence.
    /// Not causal.
    SequenceMaxAbs,
    /// Clamp to `[-1, 1]` without rescaling.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazeConfig {
    pub order: usize,
    pub sample_rate_hz: f64,
    pub cutoff_hz: f64,
    pub scaling: GazeScaling,
}

impl Default for GazeConfig {
    fn default() -> Self {
        GazeConfig { order: 4, sample_rate_hz: 30.0, cutoff_hz: 1.66, scaling: GazeScaling::RunningMaxAbs }
    }
}

/// Bin of a scaled gaze component: `(-1,-0.5] (-0.5,0] (0,0.5] (0.5,1]`.
/// Values at or below -1 fall in the first bin, above 1 in the last.
pub fn gaze_bin(v: f64) -> usize {
    if v <= -0.5 {
        0
    } else if v <= 0.0 {
        1
    } else if v <= 0.5 {
        2
    } else {
        3
    }
}

/// `[one-hot x | one-hot y]` from scaled components.
pub fn gaze_one_hot(x: f64, y: f64) -> [f64; GAMMA_DIM] {
    let mut g = [0.0; GAMMA_DIM];
    g[gaze_bin(x)] = 1.0;
    g[GAZE_BINS + gaze_bin(y)] = 1.0;
    g
}

/// Mean of the two eye vectors, x and y only.
fn mean_gaze(f: &RawFrame) -> (f64, f64) {
    (0.5 * (f.gaze_left[0] + f.gaze_right[0]), 0.5 * (f.gaze_left[1] + f.gaze_right[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazeTrack {
    pub gamma: Vec<[f64; GAMMA_DIM]>,
    /// Filtered, unscaled `(x, y)` per frame.
    pub filtered: Vec<(f64, f64)>,
    /// Frames whose gaze was missing or not unit-norm.
    pub gaps: usize,
}

/// Filters and bins the mean gaze direction of a sequence.
///
/// The filter is primed with the first valid sample. Invalid frames hold the
/// last filtered value; frames before the first valid sample read as zero.
pub fn gaze_features(frames: &[RawFrame], cfg: &GazeConfig) -> Result<GazeTrack> {
    let mut fx = ButterworthLowpass::new(cfg.order, cfg.sample_rate_hz, cfg.cutoff_hz)?;
    let mut fy = fx.clone();
    let mut primed = false;
    let mut held = (0.0, 0.0);
    let mut gaps = 0;
    let mut filtered = Vec::with_capacity(frames.len());
    for f in frames {
        if f.gaze_valid() {
            let (x, y) = mean_gaze(f);
            if !primed {
                fx.prime(x);
                fy.prime(y);
                primed = true;
            }
            held = (fx.process(x), fy.process(y));
        } else {
            gaps += 1;
        }
        filtered.push(held);
    }

    let seq_max = filtered.iter().fold(0.0f64, |m, &(x, y)| m.max(x.abs()).max(y.abs()));
    let mut running = 0.0f64;
    let gamma = filtered
        .iter()
        .map(|&(x, y)| {
            let (sx, sy) = match cfg.scaling {
                GazeScaling::Clamp => (x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0)),
                GazeScaling::RunningMaxAbs => {
                    running = running.max(x.abs()).max(y.abs());
                    scale(x, y, running)
                }
                GazeScaling::SequenceMaxAbs => scale(x, y, seq_max),
            };
            gaze_one_hot(sx, sy)
        })
        .collect();
    Ok(GazeTrack { gamma, filtered, gaps })
}

fn scale(x: f64, y: f64, m: f64) -> (f64, f64) {
    if m > 0.0 {
        (x / m, y / m)
    } else {
        (0.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::raw::NUM_LANDMARKS;

    fn gaze_frame(x: f64, y: f64) -> RawFrame {
        let z = -(1.0 - x * x - y * y).sqrt();
        RawFrame {
            frame: 0,
            landmarks: vec![(0.0, 0.0); NUM_LANDMARKS],
            pose: [0.0; 3],
            gaze_left: [x, y, z],
            gaze_right: [x, y, z],
        }
    }

    #[test]
    fn bins_cover_edges() {
        assert_eq!(gaze_bin(-1.0), 0);
        assert_eq!(gaze_bin(-0.5), 0);
        assert_eq!(gaze_bin(-0.4999), 1);
        assert_eq!(gaze_bin(0.0), 1);
        assert_eq!(gaze_bin(0.5), 2);
        assert_eq!(gaze_bin(0.5001), 3);
        assert_eq!(gaze_bin(1.0), 3);
    }

    #[test]
    fn steady_gaze_fixture() {
        assert_eq!(gaze_one_hot(0.7, -0.3), [0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let frames: Vec<_> = (0..40).map(|_| gaze_frame(0.7, -0.3)).collect();
        for scaling in [GazeScaling::Clamp, GazeScaling::RunningMaxAbs, GazeScaling::SequenceMaxAbs] {
            let cfg = GazeConfig { scaling, ..GazeConfig::default() };
            let track = gaze_features(&frames, &cfg).unwrap();
            for g in &track.gamma {
                assert_eq!(g, &[0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0], "{scaling:?}");
            }
        }
    }

    #[test]
    fn dropout_frames_hold_value() {
        let mut frames: Vec<_> = (0..10).map(|i| gaze_frame(0.05 * i as f64, 0.0)).collect();
        frames[5].gaze_left = [f64::NAN; 3];
        let track = gaze_features(&frames, &GazeConfig::default()).unwrap();
        assert_eq!(track.gaps, 1);
        assert_eq!(track.filtered[5], track.filtered[4]);
    }

    #[test]
    fn running_scaling_is_causal() {
        let frames: Vec<_> = (0..60).map(|i| gaze_frame(0.3 * (i as f64 / 10.0).sin(), 0.1)).collect();
        let full = gaze_features(&frames, &GazeConfig::default()).unwrap();
        let head = gaze_features(&frames[..25], &GazeConfig::default()).unwrap();
        assert_eq!(&full.gamma[..25], &head.gamma[..]);
    }
}
