//! Index-level split protocols.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::SequenceObservation;
use crate::error::{Error, Result};

/// Drivers with fewer samples than this cannot be held out.
pub const MIN_HELD_OUT_SAMPLES: usize = 4;

/// Shuffles `0..n` and reserves `round(n * test_fraction)` indices (at least
/// one) for testing. Both halves are returned sorted.
pub fn train_test_split<R: Rng>(n: usize, test_fraction: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} must lie in (0, 1)")));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).max(1);
    if n_test >= n {
        return Err(Error::Config(format!("{n} samples are too few for a {test_fraction} test split")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Contiguous folds over a shuffled copy of `indices`; returns
/// `(train, validation)` pairs.
pub fn k_fold<R: Rng>(indices: &[usize], k: usize, rng: &mut R) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || indices.len() < k {
        return Err(Error::Config(format!("cannot make {k} folds from {} samples", indices.len())));
    }
    let mut idx = indices.to_vec();
    idx.shuffle(rng);
    let base = idx.len() / k;
    let extra = idx.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut val = idx[start..start + size].to_vec();
        let mut train: Vec<usize> = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        val.sort_unstable();
        train.sort_unstable();
        folds.push((train, val));
        start += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LodoSplit {
    pub held_out: String,
    /// All samples of the other drivers.
    pub source: Vec<usize>,
    /// Held-out driver samples used unlabelled during adaptation.
    pub target_train: Vec<usize>,
    /// Held-out driver samples reserved for testing.
    pub target_test: Vec<usize>,
}

/// One split per driver with at least [`MIN_HELD_OUT_SAMPLES`] samples, in
/// driver-id order.
pub fn lodo_splits<R: Rng>(
    dataset: &[SequenceObservation],
    test_fraction: f64,
    rng: &mut R,
) -> Result<Vec<LodoSplit>> {
    let mut by_driver: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.iter().enumerate() {
        by_driver.entry(s.driver_id.as_str()).or_default().push(i);
    }
    if by_driver.len() < 2 {
        return Err(Error::Config(format!("leave-one-driver-out needs 2+ drivers, found {}", by_driver.len())));
    }
    let mut splits = Vec::new();
    for (driver, own) in &by_driver {
        if own.len() < MIN_HELD_OUT_SAMPLES {
            log::warn!("lodo: driver `{driver}` has {} samples, not held out", own.len());
            continue;
        }
        let (train_local, test_local) = train_test_split(own.len(), test_fraction, rng)?;
        let source = (0..dataset.len()).filter(|&i| dataset[i].driver_id != *driver).collect();
        splits.push(LodoSplit {
            held_out: driver.to_string(),
            source,
            target_train: train_local.iter().map(|&j| own[j]).collect(),
            target_test: test_local.iter().map(|&j| own[j]).collect(),
        });
    }
    if splits.is_empty() {
        return Err(Error::Config("no driver has enough samples to be held out".into()));
    }
    Ok(splits)
}
