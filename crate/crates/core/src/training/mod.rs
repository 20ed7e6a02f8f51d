//! Supervised and domain-adversarial training loops.

pub mod adam;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adam::{clip_global_norm, Adam, AdamConfig};

use crate::data::batching::derive_seed;
use crate::data::{AdversarialBatcher, SequenceObservation, SupervisedBatcher};
use crate::error::{Error, Result};
use crate::evaluation::anticipation::anticipate;
use crate::evaluation::metrics::compute_metrics;
use crate::losses::{AdversarialConfig, AnticipationLossConfig, Domain};
use crate::network::{
    full_forward_backward, mean_loss, BatchItem, BatchSettings, Checkpoint, DaRnnModel, DaRnnParams, SequenceInput,
    EXTRACTOR_LAYERS, HEAD_LAYER,
};
use crate::scalar::Scalar;

/// Quantity watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monitor {
    /// Source validation anticipation loss (lower is better).
    #[default]
    ValLoss,
    /// Source validation macro F1 (higher is better).
    ValF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss: AnticipationLossConfig,
    pub adversarial: AdversarialConfig,
    pub adam: AdamConfig,
    /// Global gradient-norm bound; off when `None`.
    pub clip_norm: Option<f64>,
    pub monitor: Monitor,
    /// Threshold used when monitoring F1.
    pub p_th: f64,
    /// Return the best monitored epoch rather than the last one.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 500,
            patience: 80,
            seed: 0,
            loss: AnticipationLossConfig::default(),
            adversarial: AdversarialConfig::default(),
            adam: AdamConfig::default(),
            clip_norm: None,
            monitor: Monitor::ValLoss,
            p_th: 0.9,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, adversarial: bool) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if adversarial && self.batch_size % 2 != 0 {
            return Err(Error::Config(format!("adversarial batch size {} must be even", self.batch_size)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm {c} must be positive")));
            }
        }
        self.loss.validate()?;
        self.adversarial.validate()?;
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_y: f64,
    pub l_d: f64,
    pub val_l_y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_f1: Option<f64>,
    /// Training-batch domain accuracy (adversarial runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_acc: Option<f64>,
    pub lambda: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: DaRnnModel<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Monitored value at `best_epoch`.
    pub best_score: f64,
}

/// History as line-delimited JSON.
pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

struct Prepared<T> {
    inputs: Vec<SequenceInput<T>>,
    classes: Vec<Option<usize>>,
}

fn prepare<T: Scalar>(set: &[SequenceObservation], require_labels: bool, what: &str) -> Result<Prepared<T>> {
    let classes: Vec<Option<usize>> = set.iter().map(|s| s.class()).collect();
    if require_labels {
        if let Some(i) = classes.iter().position(Option::is_none) {
            return Err(Error::Schema(format!("{what} sample `{}` has no label", set[i].id)));
        }
    }
    Ok(Prepared { inputs: set.iter().map(|s| s.to_input()).collect(), classes })
}

struct Validator<'a, T> {
    val: &'a Prepared<T>,
    labels: Vec<crate::data::Manoeuvre>,
    cfg: &'a TrainConfig,
}

impl<T: Scalar> Validator<'_, T> {
    fn score(&self, model: &DaRnnModel<T>) -> Result<(f64, Option<f64>)> {
        let pairs: Vec<(&SequenceInput<T>, usize)> =
            self.val.inputs.iter().zip(&self.val.classes).map(|(i, c)| (i, c.expect("validated"))).collect();
        let loss = mean_loss(model, &pairs, &self.cfg.loss)?.as_f64();
        let f1 = match self.cfg.monitor {
            Monitor::ValLoss => None,
            Monitor::ValF1 => {
                let results = self
                    .val
                    .inputs
                    .iter()
                    .map(|i| anticipate(model, i, self.cfg.p_th, false))
                    .collect::<Result<Vec<_>>>()?;
                Some(compute_metrics(&results, &self.labels)?.f1)
            }
        };
        Ok((loss, f1))
    }
}

/// Tracks the best monitored epoch and its parameters. Under `ValF1`, ties
/// in F1 fall back to the validation loss, and a new lowest validation loss
/// also resets the patience counter.
struct EarlyStop<T> {
    best: Option<(f64, f64, usize, DaRnnParams<T>)>,
    lowest_loss: f64,
    since: usize,
    patience: usize,
    maximize: bool,
}

impl<T: Scalar> EarlyStop<T> {
    fn new(patience: usize, monitor: Monitor) -> Self {
        EarlyStop { best: None, lowest_loss: f64::INFINITY, since: 0, patience, maximize: monitor == Monitor::ValF1 }
    }

    /// Returns `true` when training should stop.
    fn observe(&mut self, val_l_y: f64, val_f1: Option<f64>, epoch: usize, params: &DaRnnParams<T>) -> bool {
        let score = val_f1.unwrap_or(val_l_y);
        let better = match &self.best {
            None => true,
            Some((b, bl, _, _)) => {
                if self.maximize {
                    score > *b || (score == *b && val_l_y < *bl)
                } else {
                    score < *b
                }
            }
        };
        let progress = self.maximize && val_l_y < self.lowest_loss;
        self.lowest_loss = self.lowest_loss.min(val_l_y);
        if better && score.is_finite() {
            self.best = Some((score, val_l_y, epoch, params.clone()));
            self.since = 0;
        } else if progress {
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.since >= self.patience
    }
}

fn validation_labels(set: &[SequenceObservation]) -> Vec<crate::data::Manoeuvre> {
    set.iter().filter_map(|s| s.label).collect()
}

fn step_optimizer<T: Scalar>(
    adam: &mut Adam<DaRnnParams<T>>,
    model: &mut DaRnnModel<T>,
    mut grads: DaRnnParams<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if let Some(c) = cfg.clip_norm {
        clip_global_norm(&mut grads, T::of(c));
    }
    adam.step(&mut model.params, &grads)
}

/// Minimizes the anticipation loss on `train`, early-stopping on `val`.
/// The returned model holds the best-validation parameters.
pub fn train_supervised<T: Scalar>(
    mut model: DaRnnModel<T>,
    train: &[SequenceObservation],
    val: &[SequenceObservation],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate(false)?;
    if val.is_empty() {
        return Err(Error::Config("early stopping needs a non-empty validation set".into()));
    }
    let tr = prepare::<T>(train, true, "training")?;
    let vp = prepare::<T>(val, true, "validation")?;
    let validator = Validator { val: &vp, labels: validation_labels(val), cfg };
    let batcher = SupervisedBatcher::new(train.len(), cfg.batch_size, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam, &model.params, model.params.qualified_names())?;
    let mut stop = EarlyStop::new(cfg.patience, cfg.monitor);
    let settings = BatchSettings { loss: cfg.loss, lambda: T::zero(), adversarial: false, train: true };
    let start = Instant::now();
    let mut history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let mut l_y = 0.0;
        let mut seen = 0usize;
        for (b, rows) in batcher.epoch(epoch).into_iter().enumerate() {
            let items: Vec<BatchItem<'_, T>> = rows
                .iter()
                .enumerate()
                .map(|(slot, &i)| BatchItem {
                    input: &tr.inputs[i],
                    class: tr.classes[i],
                    weight: T::one(),
                    domain: Domain::Source,
                    seed: derive_seed(&[cfg.seed, epoch as u64, b as u64, slot as u64, 0]),
                })
                .collect();
            let out = full_forward_backward(&model, &items, &settings)?;
            l_y += out.l_y.as_f64() * rows.len() as f64;
            seen += rows.len();
            step_optimizer(&mut adam, &mut model, out.grads, cfg)?;
        }
        let (val_l_y, val_f1) = validator.score(&model)?;
        let record = EpochRecord {
            epoch,
            l_y: l_y / seen as f64,
            l_d: 0.0,
            val_l_y,
            val_f1,
            domain_acc: None,
            lambda: 0.0,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        check_finite(&record)?;
        log::debug!("epoch {epoch}: l_y {:.5} val {:.5}", record.l_y, val_l_y);
        history.push(record);
        if stop.observe(val_l_y, val_f1, epoch, &model.params) {
            break;
        }
    }
    finish(model, history, stop, cfg.restore_best)
}

/// Half-source, half-target training with the manoeuvre loss masked to
/// source rows and the extractor receiving the reversed domain gradient.
pub fn train_adversarial<T: Scalar>(
    mut model: DaRnnModel<T>,
    source: &[SequenceObservation],
    target: &[SequenceObservation],
    val: &[SequenceObservation],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate(true)?;
    if !cfg.adversarial.enabled {
        return Err(Error::Config("train_adversarial called with adaptation disabled".into()));
    }
    if val.is_empty() {
        return Err(Error::Config("early stopping needs a non-empty validation set".into()));
    }
    let sp = prepare::<T>(source, true, "source")?;
    let tp = prepare::<T>(target, false, "target")?;
    let vp = prepare::<T>(val, true, "validation")?;
    let validator = Validator { val: &vp, labels: validation_labels(val), cfg };
    let mut batcher = AdversarialBatcher::new(source.len(), target.len(), cfg.batch_size, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam, &model.params, model.params.qualified_names())?;
    let mut stop = EarlyStop::new(cfg.patience, cfg.monitor);
    let start = Instant::now();
    let mut history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let lambda = cfg.adversarial.lambda_at(epoch);
        let settings = BatchSettings { loss: cfg.loss, lambda: T::of(lambda), adversarial: true, train: true };
        let (mut l_y, mut l_d) = (0.0, 0.0);
        let (mut n_src, mut n_all) = (0usize, 0usize);
        let (mut correct, mut total) = (0usize, 0usize);
        for (b, batch) in batcher.epoch(epoch).into_iter().enumerate() {
            let mut items = Vec::with_capacity(batch.len());
            for (slot, &i) in batch.source.iter().enumerate() {
                items.push(BatchItem {
                    input: &sp.inputs[i],
                    class: sp.classes[i],
                    weight: T::one(),
                    domain: Domain::Source,
                    seed: derive_seed(&[cfg.seed, epoch as u64, b as u64, slot as u64, 0]),
                });
            }
            for (slot, &i) in batch.target.iter().enumerate() {
                items.push(BatchItem {
                    input: &tp.inputs[i],
                    class: None,
                    weight: T::zero(),
                    domain: Domain::Target,
                    seed: derive_seed(&[cfg.seed, epoch as u64, b as u64, slot as u64, 1]),
                });
            }
            let out = full_forward_backward(&model, &items, &settings)?;
            l_y += out.l_y.as_f64() * batch.source.len() as f64;
            l_d += out.l_d.as_f64() * batch.len() as f64;
            n_src += batch.source.len();
            n_all += batch.len();
            correct += out.domain_correct;
            total += out.domain_total;
            step_optimizer(&mut adam, &mut model, out.grads, cfg)?;
        }
        let (val_l_y, val_f1) = validator.score(&model)?;
        let record = EpochRecord {
            epoch,
            l_y: l_y / n_src as f64,
            l_d: l_d / n_all as f64,
            val_l_y,
            val_f1,
            domain_acc: Some(correct as f64 / total.max(1) as f64),
            lambda,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        check_finite(&record)?;
        log::debug!("epoch {epoch}: l_y {:.5} l_d {:.5} val {:.5}", record.l_y, record.l_d, val_l_y);
        history.push(record);
        if stop.observe(val_l_y, val_f1, epoch, &model.params) {
            break;
        }
    }
    finish(model, history, stop, cfg.restore_best)
}

fn check_finite(r: &EpochRecord) -> Result<()> {
    if r.l_y.is_finite() && r.l_d.is_finite() && r.val_l_y.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric { layer: "loss".into(), detail: format!("non-finite loss at epoch {}", r.epoch) })
    }
}

fn finish<T: Scalar>(
    mut model: DaRnnModel<T>,
    history: Vec<EpochRecord>,
    stop: EarlyStop<T>,
    restore_best: bool,
) -> Result<TrainOutcome<T>> {
    let (best_score, _, best_epoch, params) =
        stop.best.ok_or_else(|| Error::Config("training ran for zero epochs".into()))?;
    if restore_best {
        model.params = params;
    }
    Ok(TrainOutcome { model, history, best_epoch, best_score })
}

/// Copies the extractor (and optionally the manoeuvre head) from `donor` and
/// draws a fresh domain classifier.
pub fn fine_tune_init<T: Scalar>(
    model: &mut DaRnnModel<T>,
    donor: &Checkpoint,
    include_head: bool,
    seed: u64,
) -> Result<()> {
    let mut layers: Vec<&str> = EXTRACTOR_LAYERS.to_vec();
    if include_head {
        layers.push(HEAD_LAYER);
    }
    donor.load_layers_into(&mut model.params, &layers)?;
    model.reset_domain_head(seed);
    Ok(())
}
