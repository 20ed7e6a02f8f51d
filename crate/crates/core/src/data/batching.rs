//! Epoch batch plans for supervised and mixed-domain training.
//!
//! Plans hold indices only. Source order for epoch `e` depends only on
//! `(seed, e)` and the half-batch size, so an adversarial run of batch `B`
//! and a supervised run of batch `B/2` visit the source rows identically.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SequenceObservation;
use crate::error::{Error, Result};

const SOURCE_STREAM: u64 = 0x5eed_0001;
const TARGET_STREAM: u64 = 0x5eed_0002;

/// Mixes a list of words into one seed (SplitMix64 finalizer per word).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// One batch: `source[i]` indexes the source set, `target[i]` the target set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainBatch {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl DomainBatch {
    pub fn len(&self) -> usize {
        self.source.len() + self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Manoeuvre-loss weight per row, source rows first.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.source.len()];
        w.resize(self.len(), 0.0);
        w
    }

    /// Domain label per row, source rows first.
    pub fn domain_labels(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.source.len()];
        d.resize(self.len(), 1.0);
        d
    }

    pub fn max_len(&self, source: &[SequenceObservation], target: &[SequenceObservation]) -> usize {
        self.lengths(source, target).into_iter().max().unwrap_or(0)
    }

    /// Per row, `max_len` flags with padding at the front (`false`).
    pub fn validity_mask(&self, source: &[SequenceObservation], target: &[SequenceObservation]) -> Vec<Vec<bool>> {
        let lens = self.lengths(source, target);
        let max = lens.iter().copied().max().unwrap_or(0);
        lens.into_iter().map(|l| (0..max).map(|t| t >= max - l).collect()).collect()
    }

    fn lengths(&self, source: &[SequenceObservation], target: &[SequenceObservation]) -> Vec<usize> {
        self.source.iter().map(|&i| source[i].len()).chain(self.target.iter().map(|&i| target[i].len())).collect()
    }
}

/// Per-epoch permutation of the source set cut into `batch_size` chunks.
#[derive(Debug, Clone)]
pub struct SupervisedBatcher {
    n: usize,
    batch_size: usize,
    seed: u64,
}

impl SupervisedBatcher {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("empty training set".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(SupervisedBatcher { n, batch_size, seed })
    }

    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, SOURCE_STREAM, epoch as u64]));
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Half-source, half-target batches. An epoch is one pass over the source
/// set; target rows are drawn from a queue that is reshuffled whenever it
/// runs out, carrying over between epochs.
#[derive(Debug, Clone)]
pub struct AdversarialBatcher {
    source: SupervisedBatcher,
    n_target: usize,
    seed: u64,
    queue: Vec<usize>,
    pos: usize,
    cycle: u64,
}

impl AdversarialBatcher {
    pub fn new(n_source: usize, n_target: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size < 2 || batch_size % 2 != 0 {
            return Err(Error::Config(format!("adversarial batch size {batch_size} must be even and at least 2")));
        }
        if n_target == 0 {
            return Err(Error::Config("adversarial training needs a non-empty target set".into()));
        }
        if n_target > n_source {
            log::warn!("target set ({n_target}) is larger than source set ({n_source})");
        }
        Ok(AdversarialBatcher {
            source: SupervisedBatcher::new(n_source, batch_size / 2, seed)?,
            n_target,
            seed,
            queue: Vec::new(),
            pos: 0,
            cycle: 0,
        })
    }

    fn next_target(&mut self) -> usize {
        if self.pos == self.queue.len() {
            self.queue = (0..self.n_target).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, TARGET_STREAM, self.cycle]));
            self.queue.shuffle(&mut rng);
            self.cycle += 1;
            self.pos = 0;
        }
        self.pos += 1;
        self.queue[self.pos - 1]
    }

    /// Batches for the next epoch; call once per epoch, in order.
    pub fn epoch(&mut self, epoch: usize) -> Vec<DomainBatch> {
        self.source
            .epoch(epoch)
            .into_iter()
            .map(|source| {
                let target = (0..source.len()).map(|_| self.next_target()).collect();
                DomainBatch { source, target }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_example() {
        let mut b = AdversarialBatcher::new(128, 16, 128, 7).unwrap();
        let batches = b.epoch(0);
        assert_eq!(batches.len(), 2);
        let mut uses = [0usize; 16];
        let mut seen = vec![0usize; 128];
        for batch in &batches {
            assert_eq!(batch.source.len(), 64);
            assert_eq!(batch.target.len(), 64);
            batch.target.iter().for_each(|&t| uses[t] += 1);
            batch.source.iter().for_each(|&s| seen[s] += 1);
        }
        assert!(uses.iter().all(|&u| u == 8));
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn source_order_matches_half_batch_supervised() {
        let mut adv = AdversarialBatcher::new(50, 9, 16, 11).unwrap();
        let sup = SupervisedBatcher::new(50, 8, 11).unwrap();
        for e in 0..3 {
            let a: Vec<Vec<usize>> = adv.epoch(e).into_iter().map(|b| b.source).collect();
            assert_eq!(a, sup.epoch(e));
        }
    }

    #[test]
    fn uneven_tail_stays_balanced() {
        let mut adv = AdversarialBatcher::new(21, 5, 8, 0).unwrap();
        for b in adv.epoch(0) {
            assert_eq!(b.source.len(), b.target.len());
        }
    }

    #[test]
    fn odd_batch_and_empty_target_rejected() {
        assert!(AdversarialBatcher::new(10, 4, 7, 0).is_err());
        assert!(AdversarialBatcher::new(10, 0, 8, 0).is_err());
    }

    #[test]
    fn derive_seed_distinguishes_order() {
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
        assert_eq!(derive_seed(&[5, 6, 7]), derive_seed(&[5, 6, 7]));
    }
}
