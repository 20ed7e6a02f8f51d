use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Manoeuvre, SequenceObservation, FRAME_RATE};
use crate::error::{Error, Result};
use crate::network::{DaRnnModel, SequenceInput};
use crate::scalar::Scalar;

pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnticipationResult {
    pub predicted: Manoeuvre,
    /// 1-based frame of the first threshold crossing.
    pub t_star: Option<usize>,
    /// Seconds between the prediction and the end of the sequence.
    pub ttp: f64,
    pub len: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<Vec<f64>>,
}

/// Locks the first manoeuvre class whose probability reaches `p_th`;
/// predicts straight with zero lead if none does.
pub fn anticipate_probs<T: Scalar>(probs: &[Vec<T>], p_th: f64) -> Result<AnticipationResult> {
    if probs.is_empty() {
        return Err(Error::Usage("cannot anticipate on an empty sequence".into()));
    }
    let len = probs.len();
    for (t, p) in probs.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (c, v) in p.iter().enumerate().skip(1) {
            let v = v.as_f64();
            if v >= p_th && best.is_none_or(|(_, b)| v > b) {
                best = Some((c, v));
            }
        }
        if let Some((c, _)) = best {
            let t_star = t + 1;
            return Ok(AnticipationResult {
                predicted: Manoeuvre::from_index(c)
                    .ok_or_else(|| Error::Shape(format!("class index {c} out of range")))?,
                t_star: Some(t_star),
                ttp: (len - t_star) as f64 / FRAME_RATE,
                len,
                trajectory: Vec::new(),
            });
        }
    }
    Ok(AnticipationResult { predicted: Manoeuvre::Straight, t_star: None, ttp: 0.0, len, trajectory: Vec::new() })
}

pub fn anticipate<T: Scalar>(
    model: &DaRnnModel<T>,
    input: &SequenceInput<T>,
    p_th: f64,
    keep_trajectory: bool,
) -> Result<AnticipationResult> {
    let probs = model.predict(input)?;
    let mut res = anticipate_probs(&probs, p_th)?;
    if keep_trajectory {
        res.trajectory = probs.iter().map(|p| p.iter().map(|v| v.as_f64()).collect()).collect();
    }
    Ok(res)
}

/// Anticipation over a set, in input order.
pub fn anticipate_all<T: Scalar>(
    model: &DaRnnModel<T>,
    set: &[SequenceObservation],
    p_th: f64,
    keep_trajectory: bool,
) -> Result<Vec<AnticipationResult>> {
    set.par_iter().map(|s| anticipate(model, &s.to_input(), p_th, keep_trajectory)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(len: usize, cross_at: Option<(usize, usize)>) -> Vec<Vec<f64>> {
        (1..=len)
            .map(|t| {
                let mut p = vec![0.2; 5];
                if let Some((c, at)) = cross_at {
                    if t >= at {
                        p = vec![0.025; 5];
                        p[c] = 0.9;
                    }
                }
                p
            })
            .collect()
    }

    #[test]
    fn crossing_at_frame_30() {
        let r = anticipate_probs(&traj(150, Some((3, 30))), 0.9).unwrap();
        assert_eq!(r.predicted, Manoeuvre::TurnLeft);
        assert_eq!(r.t_star, Some(30));
        assert!((r.ttp - 4.0).abs() < 1e-12);
    }

    #[test]
    fn boundaries() {
        let first = anticipate_probs(&traj(150, Some((1, 1))), 0.9).unwrap();
        assert!((first.ttp - 149.0 / 30.0).abs() < 1e-12);
        let last = anticipate_probs(&traj(150, Some((2, 150))), 0.9).unwrap();
        assert_eq!(last.predicted, Manoeuvre::LaneRight);
        assert_eq!(last.ttp, 0.0);
        let none = anticipate_probs(&traj(150, None), 0.9).unwrap();
        assert_eq!(none.predicted, Manoeuvre::Straight);
        assert_eq!((none.t_star, none.ttp), (None, 0.0));
    }

    #[test]
    fn straight_never_triggers() {
        let mut p = traj(10, None);
        p[3] = vec![0.96, 0.01, 0.01, 0.01, 0.01];
        let r = anticipate_probs(&p, 0.9).unwrap();
        assert_eq!((r.predicted, r.t_star), (Manoeuvre::Straight, None));
    }

    #[test]
    fn later_frames_do_not_matter() {
        let mut p = traj(60, Some((4, 20)));
        let a = anticipate_probs(&p, 0.9).unwrap();
        for row in p.iter_mut().skip(20) {
            *row = vec![0.0, 1.0, 0.0, 0.0, 0.0];
        }
        assert_eq!(anticipate_probs(&p, 0.9).unwrap(), a);
    }

    #[test]
    fn empty_rejected() {
        assert!(anticipate_probs::<f64>(&[], 0.9).is_err());
    }
}
