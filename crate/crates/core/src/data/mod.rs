//! Dataset schema, persistence, augmentation, splits, batching and the
//! synthetic generator.

pub mod augment;
pub mod batching;
pub mod io;
pub mod split;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FrameFeatures, PHI_DIM, GAMMA_DIM};
use crate::losses::Domain;
use crate::network::SequenceInput;
use crate::scalar::Scalar;

pub use augment::{augment_subsequences, AugmentConfig};
pub use batching::{AdversarialBatcher, DomainBatch, SupervisedBatcher};
pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset_string};
pub use split::{k_fold, lodo_splits, train_test_split, LodoSplit};
pub use synth::{generate_drivers, generate_synthetic, DomainShift, SynthConfig};

pub const FRAME_RATE: f64 = 30.0;
pub const MAX_SEQUENCE_LEN: usize = 150;
pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manoeuvre {
    Straight,
    LaneLeft,
    LaneRight,
    TurnLeft,
    TurnRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    None,
}

impl Manoeuvre {
    pub const ALL: [Manoeuvre; NUM_CLASSES] =
        [Manoeuvre::Straight, Manoeuvre::LaneLeft, Manoeuvre::LaneRight, Manoeuvre::TurnLeft, Manoeuvre::TurnRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Manoeuvre::Straight => "straight",
            Manoeuvre::LaneLeft => "lane_left",
            Manoeuvre::LaneRight => "lane_right",
            Manoeuvre::TurnLeft => "turn_left",
            Manoeuvre::TurnRight => "turn_right",
        }
    }

    pub fn side(self) -> Side {
        match self {
            Manoeuvre::LaneLeft | Manoeuvre::TurnLeft => Side::Left,
            Manoeuvre::LaneRight | Manoeuvre::TurnRight => Side::Right,
            Manoeuvre::Straight => Side::None,
        }
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, Manoeuvre::LaneLeft | Manoeuvre::LaneRight)
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Manoeuvre::TurnLeft | Manoeuvre::TurnRight)
    }
}

impl fmt::Display for Manoeuvre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Manoeuvre {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown manoeuvre `{s}`")))
    }
}

pub fn parse_domain(s: &str) -> Result<Domain> {
    match s {
        "source" => Ok(Domain::Source),
        "target" => Ok(Domain::Target),
        other => Err(Error::Schema(format!("unknown domain `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceObservation {
    pub id: String,
    pub driver_id: String,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Manoeuvre>,
    pub frames: Vec<FrameFeatures>,
}

impl SequenceObservation {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn eta_dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.eta.len())
    }

    /// Checks length and feature widths; returns the field at fault.
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        if self.frames.is_empty() || self.frames.len() > MAX_SEQUENCE_LEN {
            return Err(("frames".into(), format!("length {} outside 1..={MAX_SEQUENCE_LEN}", self.frames.len())));
        }
        if self.domain == Domain::Source && self.label.is_none() {
            return Err(("label".into(), "source-domain record has no label".into()));
        }
        let eta = self.eta_dim();
        if eta != 3 && eta != 4 {
            return Err(("frames[0].eta".into(), format!("width {eta}, expected 3 or 4")));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.phi.len() != PHI_DIM {
                return Err((format!("frames[{t}].phi"), format!("width {}, expected {PHI_DIM}", f.phi.len())));
            }
            if f.gamma.len() != GAMMA_DIM {
                return Err((format!("frames[{t}].gamma"), format!("width {}, expected {GAMMA_DIM}", f.gamma.len())));
            }
            if f.eta.len() != eta {
                return Err((format!("frames[{t}].eta"), format!("width {}, expected {eta}", f.eta.len())));
            }
            if !f.phi.iter().chain(&f.gamma).chain(&f.eta).all(|v| v.is_finite()) {
                return Err((format!("frames[{t}]"), "non-finite feature value".into()));
            }
        }
        Ok(())
    }

    pub fn to_input<T: Scalar>(&self) -> SequenceInput<T> {
        let conv = |v: &Vec<f64>| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        SequenceInput {
            phi: self.frames.iter().map(|f| conv(&f.phi)).collect(),
            gamma: self.frames.iter().map(|f| conv(&f.gamma)).collect(),
            eta: self.frames.iter().map(|f| conv(&f.eta)).collect(),
        }
    }

    pub fn class(&self) -> Option<usize> {
        self.label.map(Manoeuvre::index)
    }
}

/// Per-class counts in [`Manoeuvre::ALL`] order; unlabelled records are skipped.
pub fn class_counts(set: &[SequenceObservation]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for s in set {
        if let Some(l) = s.label {
            counts[l.index()] += 1;
        }
    }
    counts
}
