//! Suffix-window augmentation with class balancing.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{class_counts, SequenceObservation, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Shortest window length, inclusive.
    pub min_len: usize,
    /// Longest window length, inclusive; also capped by the parent length.
    pub max_len: usize,
    /// Per-class target count; `None` balances up to the largest class.
    pub target_per_class: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { min_len: 51, max_len: 149, target_per_class: None }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "augmentation window bounds [{}, {}] are empty",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// Returns the originals followed by suffix windows that end on the parent's
/// last frame, adding windows to each labelled class until it reaches the
/// target count. Parents shorter than `min_len` are skipped.
pub fn augment_subsequences<R: Rng>(
    train: &[SequenceObservation],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<SequenceObservation>> {
    cfg.validate()?;
    let counts = class_counts(train);
    let target = cfg.target_per_class.unwrap_or_else(|| counts.iter().copied().max().unwrap_or(0));
    let mut out: Vec<SequenceObservation> = train.to_vec();
    for class in 0..NUM_CLASSES {
        let mut parents: Vec<&SequenceObservation> = Vec::new();
        for s in train.iter().filter(|s| s.class() == Some(class)) {
            if s.len() < cfg.min_len {
                log::warn!("augmentation: `{}` has {} frames (< {}), skipped", s.id, s.len(), cfg.min_len);
            } else {
                parents.push(s);
            }
        }
        let missing = target.saturating_sub(counts[class]);
        if missing == 0 {
            continue;
        }
        if parents.is_empty() {
            log::warn!("augmentation: class {class} has no usable parent, left at {} samples", counts[class]);
            continue;
        }
        parents.shuffle(rng);
        for k in 0..missing {
            let parent = parents[k % parents.len()];
            let hi = cfg.max_len.min(parent.len());
            let len = rng.gen_range(cfg.min_len..=hi);
            out.push(SequenceObservation {
                id: format!("{}~sub{k:04}", parent.id),
                driver_id: parent.driver_id.clone(),
                domain: parent.domain,
                label: parent.label,
                frames: parent.frames[parent.len() - len..].to_vec(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Manoeuvre;
    use crate::features::FrameFeatures;
    use crate::losses::Domain;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(id: &str, label: Manoeuvre, len: usize) -> SequenceObservation {
        let frames = (0..len)
            .map(|t| FrameFeatures { phi: vec![t as f64; 13], gamma: vec![0.0; 8], eta: vec![0.0; 3] })
            .collect();
        SequenceObservation { id: id.into(), driver_id: "d".into(), domain: Domain::Source, label: Some(label), frames }
    }

    #[test]
    fn balances_and_anchors_at_end() {
        let mut train = Vec::new();
        for k in 0..6 {
            train.push(seq(&format!("s{k}"), Manoeuvre::Straight, 150));
        }
        train.push(seq("l0", Manoeuvre::LaneLeft, 150));
        train.push(seq("r0", Manoeuvre::TurnRight, 150));
        train.push(seq("short", Manoeuvre::TurnRight, 40));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = augment_subsequences(&train, &AugmentConfig::default(), &mut rng).unwrap();
        let counts = class_counts(&out);
        assert_eq!(counts, [6, 6, 0, 0, 6]);
        assert_eq!(&out[..train.len()], &train[..]);
        for s in &out[train.len()..] {
            assert!((51..=149).contains(&s.len()));
            assert!(!s.id.starts_with("short"));
            assert_eq!(s.frames.last().unwrap().phi[0], 149.0);
        }
    }
}
