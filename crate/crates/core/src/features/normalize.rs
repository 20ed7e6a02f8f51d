//! Z-scoring of the continuous feature slots.
//!
//! Only pose angles (`phi[10..13]`) and speed (`eta[3]`, when present) are
//! scaled. Histogram, one-hot and flag slots pass through untouched.
//! Applying the same stats twice is not the identity; pipelines apply them
//! exactly once.

use serde::{Deserialize, Serialize};

use super::FrameFeatures;
use crate::error::{Error, Result};

const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Phi,
    Gamma,
    Eta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotStats {
    pub group: FeatureGroup,
    pub index: usize,
    pub mean: f64,
    /// Population standard deviation; 0 marks a pass-through slot.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// Name of the split the stats were fitted on.
    pub split: String,
    /// `split` plus a hash of the fitted values.
    pub id: String,
    pub slots: Vec<SlotStats>,
}

fn continuous_slots(eta_width: usize) -> Vec<(FeatureGroup, usize)> {
    let mut slots: Vec<_> = (10..13).map(|i| (FeatureGroup::Phi, i)).collect();
    if eta_width >= 4 {
        slots.push((FeatureGroup::Eta, 3));
    }
    slots
}

fn slot(f: &FrameFeatures, group: FeatureGroup, index: usize) -> f64 {
    match group {
        FeatureGroup::Phi => f.phi[index],
        FeatureGroup::Gamma => f.gamma[index],
        FeatureGroup::Eta => f.eta[index],
    }
}

fn slot_mut(f: &mut FrameFeatures, group: FeatureGroup, index: usize) -> &mut f64 {
    match group {
        FeatureGroup::Phi => &mut f.phi[index],
        FeatureGroup::Gamma => &mut f.gamma[index],
        FeatureGroup::Eta => &mut f.eta[index],
    }
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Fits per-slot mean and standard deviation over every frame of `seqs`.
pub fn fit_normalization<'a, I>(split: &str, seqs: I) -> Result<NormalizationStats>
where
    I: IntoIterator<Item = &'a [FrameFeatures]>,
{
    let seqs: Vec<&[FrameFeatures]> = seqs.into_iter().collect();
    let first = seqs
        .iter()
        .find_map(|s| s.first())
        .ok_or_else(|| Error::Config(format!("cannot fit normalization on empty split `{split}`")))?;
    let eta_width = first.eta.len();
    let mut slots = Vec::new();
    for (group, index) in continuous_slots(eta_width) {
        let mut n = 0usize;
        let mut sum = 0.0;
        for f in seqs.iter().flat_map(|s| s.iter()) {
            sum += slot(f, group, index);
            n += 1;
        }
        let mean = sum / n as f64;
        let var = seqs.iter().flat_map(|s| s.iter()).map(|f| (slot(f, group, index) - mean).powi(2)).sum::<f64>()
            / n as f64;
        let mut std = var.sqrt();
        if !(std > MIN_STD) {
            log::warn!("normalization: {group:?}[{index}] has zero variance on `{split}`, passing through");
            std = 0.0;
        }
        slots.push(SlotStats { group, index, mean, std });
    }
    let hash = fnv1a(slots.iter().flat_map(|s| {
        s.mean.to_bits().to_le_bytes().into_iter().chain(s.std.to_bits().to_le_bytes())
    }));
    Ok(NormalizationStats { split: split.to_string(), id: format!("{split}-{hash:016x}"), slots })
}

impl NormalizationStats {
    pub fn apply_frame(&self, f: &mut FrameFeatures) -> Result<()> {
        for s in &self.slots {
            let width = match s.group {
                FeatureGroup::Phi => f.phi.len(),
                FeatureGroup::Gamma => f.gamma.len(),
                FeatureGroup::Eta => f.eta.len(),
            };
            if s.index >= width {
                return Err(Error::Schema(format!(
                    "normalization stats `{}` cover {:?}[{}] but frames have width {width}",
                    self.id, s.group, s.index
                )));
            }
            if s.std > 0.0 {
                let v = slot_mut(f, s.group, s.index);
                *v = (*v - s.mean) / s.std;
            }
        }
        Ok(())
    }

    pub fn apply(&self, frames: &mut [FrameFeatures]) -> Result<()> {
        frames.iter_mut().try_for_each(|f| self.apply_frame(f))
    }
}
