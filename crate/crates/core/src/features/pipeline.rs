//! Whole-sequence featurization.

use std::path::Path;

use serde::Serialize;

use super::environment::{environment_features, read_context_csv, ContextRecord};
use super::gaze::gaze_features;
use super::histogram::head_features;
use super::raw::{read_frames_csv, RawFrame};
use super::{FeatureConfig, FrameFeatures};
use crate::data::{parse_domain, SequenceObservation, MAX_SEQUENCE_LEN};
use crate::error::{Error, Result};
use crate::losses::Domain;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FeatureLog {
    pub id: String,
    pub frames: usize,
    /// Frames with missing landmarks or pose, filled from the last valid frame.
    pub invalid_landmark_frames: usize,
    /// Frames with missing or non-unit gaze, holding the last filtered value.
    pub invalid_gaze_frames: usize,
}

/// Featurizes one clip. Frame `t` depends only on frames `0..=t`.
///
/// The first valid frame is compared with itself (zero motion). Frames with
/// missing landmarks repeat the last valid head features; before any valid
/// frame the zero-motion, zero-pose vector is used.
pub fn featurize_sequence(
    frames: &[RawFrame],
    context: &ContextRecord,
    cfg: &FeatureConfig,
) -> Result<(Vec<FrameFeatures>, FeatureLog)> {
    let eta = environment_features(context, cfg.exclude_speed)?;
    let gaze = gaze_features(frames, &cfg.gaze)?;
    let mut log = FeatureLog {
        id: context.id.clone(),
        frames: frames.len(),
        invalid_gaze_frames: gaze.gaps,
        ..FeatureLog::default()
    };
    let mut last_valid: Option<&RawFrame> = None;
    let mut last_phi = {
        let mut phi = vec![0.0; 13];
        phi[2] = 1.0;
        phi[9] = 1.0;
        phi
    };
    let mut out = Vec::with_capacity(frames.len());
    for (f, gamma) in frames.iter().zip(gaze.gamma) {
        if f.landmarks_valid() {
            let prev = last_valid.unwrap_or(f);
            last_phi = head_features(prev, f, cfg.mirror_x);
            last_valid = Some(f);
        } else {
            log.invalid_landmark_frames += 1;
        }
        out.push(FrameFeatures { phi: last_phi.clone(), gamma: gamma.to_vec(), eta: eta.clone() });
    }
    Ok((out, log))
}

/// Featurizes every `<id>.csv` under `input_dir` whose id appears in the
/// context file. Clips are processed in id order; clips longer than the
/// maximum sequence length keep their final frames.
pub fn featurize_dir(
    input_dir: &Path,
    context_path: &Path,
    cfg: &FeatureConfig,
) -> Result<(Vec<SequenceObservation>, Vec<FeatureLog>)> {
    let context = read_context_csv(context_path)?;
    let mut clips = Vec::new();
    let entries = std::fs::read_dir(input_dir).map_err(|e| Error::io(input_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(input_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("csv") {
            clips.push(path);
        }
    }
    clips.sort();
    if clips.is_empty() {
        return Err(Error::Usage(format!("no .csv clips found in {}", input_dir.display())));
    }
    let mut records = Vec::new();
    let mut logs = Vec::new();
    for path in clips {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let origin = path.display().to_string();
        let ctx = context
            .get(&id)
            .ok_or_else(|| Error::schema_at(&origin, format!("no context record for clip `{id}`")))?;
        let mut frames = read_frames_csv(&path)?;
        if frames.is_empty() {
            return Err(Error::schema_at(&origin, "clip has no frames"));
        }
        if frames.len() > MAX_SEQUENCE_LEN {
            frames.drain(..frames.len() - MAX_SEQUENCE_LEN);
        }
        let (features, log) = featurize_sequence(&frames, ctx, cfg)?;
        let domain = parse_domain(&ctx.domain).map_err(|e| Error::schema_at(context_path.display(), e))?;
        let label = if ctx.label.is_empty() {
            None
        } else {
            Some(ctx.label.parse().map_err(|e| Error::schema_at(context_path.display(), e))?)
        };
        if domain == Domain::Source && label.is_none() {
            return Err(Error::schema_at(context_path.display(), format!("source clip `{id}` has no label")));
        }
        records.push(SequenceObservation { id, driver_id: ctx.driver_id.clone(), domain, label, frames: features });
        logs.push(log);
    }
    Ok((records, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::raw::NUM_LANDMARKS;

    fn ctx() -> ContextRecord {
        ContextRecord {
            id: "c".into(),
            driver_id: "d".into(),
            domain: "source".into(),
            label: "straight".into(),
            lane_left: 1.0,
            lane_right: 0.0,
            intersection: 0.0,
            speed: 50.0,
        }
    }

    fn clip(n: usize) -> Vec<RawFrame> {
        (0..n)
            .map(|t| RawFrame {
                frame: t,
                landmarks: (0..NUM_LANDMARKS).map(|i| (i as f64 - 3.0 * t as f64, 10.0)).collect(),
                pose: [0.0, 0.01 * t as f64, 0.0],
                gaze_left: [0.6, 0.0, -0.8],
                gaze_right: [0.6, 0.0, -0.8],
            })
            .collect()
    }

    #[test]
    fn streaming_prefix_property() {
        let frames = clip(30);
        let cfg = FeatureConfig::default();
        let (full, _) = featurize_sequence(&frames, &ctx(), &cfg).unwrap();
        let (head, _) = featurize_sequence(&frames[..12], &ctx(), &cfg).unwrap();
        assert_eq!(&full[..12], &head[..]);
    }

    #[test]
    fn gaps_carry_forward() {
        let mut frames = clip(10);
        frames[4].landmarks[0].1 = f64::NAN;
        let (feats, log) = featurize_sequence(&frames, &ctx(), &FeatureConfig::default()).unwrap();
        assert_eq!(log.invalid_landmark_frames, 1);
        assert_eq!(feats[4].phi, feats[3].phi);
        // Motion after the gap spans two frames (-6 px).
        assert_eq!(feats[5].phi[0], 1.0);
        assert_eq!(feats[1].phi[1], 1.0);
    }

    #[test]
    fn speed_switch_sets_width() {
        let frames = clip(3);
        let on = FeatureConfig { exclude_speed: false, ..FeatureConfig::default() };
        assert_eq!(featurize_sequence(&frames, &ctx(), &on).unwrap().0[0].eta.len(), 4);
        assert_eq!(featurize_sequence(&frames, &ctx(), &FeatureConfig::default()).unwrap().0[0].eta.len(), 3);
    }
}
