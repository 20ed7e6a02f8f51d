//! End-to-end experiment protocols: pooled-driver cross-validation,
//! leave-one-driver-out adaptation, and dataset-to-dataset adaptation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anticipation::anticipate_all;
use super::metrics::{compute_metrics, MetricsReport};
use crate::data::batching::derive_seed;
use crate::data::{augment_subsequences, k_fold, lodo_splits, train_test_split, AugmentConfig, SequenceObservation};
use crate::error::{Error, Result};
use crate::features::{fit_normalization, NormalizationStats};
use crate::losses::Domain;
use crate::network::{Checkpoint, DaRnnModel, NetworkConfig};
use crate::scalar::Scalar;
use crate::training::{fine_tune_init, train_adversarial, train_supervised, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Suffix-window augmentation of training folds; off when `None`.
    /// Written as a table, or `false` to switch it off.
    #[serde(with = "toggle")]
    pub augment: Option<AugmentConfig>,
    pub test_fraction: f64,
    pub folds: usize,
    /// Share of each target set held back for testing.
    pub target_test_fraction: f64,
    /// Share of the source set used for early stopping in adaptation runs.
    pub val_fraction: f64,
    pub p_th: f64,
    pub normalize: bool,
    /// Also copy the manoeuvre head when fine-tuning.
    pub fine_tune_head: bool,
    /// Epoch budget of the adversarial phase; `train.max_epochs` when `None`.
    pub adapt_epochs: Option<usize>,
    /// Keep the best source-validation epoch of the fine-tuned run. When
    /// false it keeps its final weights.
    pub fine_tune_restore_best: bool,
    pub seed: u64,
}

mod toggle {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::data::AugmentConfig;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Flag(bool),
        Table(AugmentConfig),
    }

    pub fn serialize<S: Serializer>(v: &Option<AugmentConfig>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(a) => Repr::Table(*a).serialize(s),
            None => Repr::Flag(false).serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<AugmentConfig>, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Flag(false) => None,
            Repr::Flag(true) => Some(AugmentConfig::default()),
            Repr::Table(a) => Some(a),
        })
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            augment: Some(AugmentConfig::default()),
            test_fraction: 0.15,
            folds: 5,
            target_test_fraction: 0.3,
            val_fraction: 0.15,
            p_th: 0.9,
            normalize: true,
            fine_tune_head: true,
            adapt_epochs: None,
            fine_tune_restore_best: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    NoAdaptation,
    DomainAdversarial,
    DomainAdversarialFineTuned,
}

impl Condition {
    pub const ALL: [Condition; 3] =
        [Condition::NoAdaptation, Condition::DomainAdversarial, Condition::DomainAdversarialFineTuned];

    pub fn label(self) -> &'static str {
        match self {
            Condition::NoAdaptation => "No adaptation",
            Condition::DomainAdversarial => "DA-RNN",
            Condition::DomainAdversarialFineTuned => "DA-RNN + fine-tuning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment1Report {
    pub folds: Vec<FoldSummary>,
    pub chosen_fold: usize,
    pub test_ids: Vec<String>,
    pub normalization: Option<NormalizationStats>,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    /// Target samples used for testing, identical across conditions.
    pub test_ids: Vec<String>,
    pub conditions: Vec<ConditionResult>,
}

impl AdaptationReport {
    pub fn get(&self, c: Condition) -> &ConditionResult {
        self.conditions.iter().find(|r| r.condition == c).expect("all conditions are run")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverReport {
    pub driver: String,
    pub report: AdaptationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub condition: Condition,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_ttp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LodoReport {
    pub drivers: Vec<DriverReport>,
    pub mean: Vec<MeanMetrics>,
}

impl LodoReport {
    pub fn mean_of(&self, c: Condition) -> MeanMetrics {
        *self.mean.iter().find(|m| m.condition == c).expect("all conditions are run")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub f1: f64,
    pub mean_ttp: f64,
}

fn pick(set: &[SequenceObservation], idx: &[usize]) -> Vec<SequenceObservation> {
    idx.iter().map(|&i| set[i].clone()).collect()
}

fn check_widths(sets: &[&[SequenceObservation]]) -> Result<usize> {
    let mut width = None;
    for s in sets.iter().flat_map(|s| s.iter()) {
        let w = s.eta_dim();
        match width {
            None => width = Some(w),
            Some(d) if d != w => {
                return Err(Error::Schema(format!("sample `{}` has eta width {w}, expected {d}", s.id)));
            }
            _ => {}
        }
    }
    width.ok_or_else(|| Error::Config("no samples".into()))
}

fn network_for(cfg: &ExperimentConfig, eta_dim: usize) -> NetworkConfig {
    let mut net = cfg.network.clone();
    if net.eta_dim != eta_dim {
        log::info!("network eta_dim set to {eta_dim} to match the data");
        net.eta_dim = eta_dim;
    }
    net
}

fn fit_stats(cfg: &ExperimentConfig, split: &str, fit_on: &[&[SequenceObservation]]) -> Result<Option<NormalizationStats>> {
    if !cfg.normalize {
        return Ok(None);
    }
    fit_normalization(split, fit_on.iter().flat_map(|s| s.iter()).map(|s| s.frames.as_slice())).map(Some)
}

fn apply_stats(stats: &Option<NormalizationStats>, sets: &mut [&mut Vec<SequenceObservation>]) -> Result<()> {
    if let Some(stats) = stats {
        for set in sets.iter_mut() {
            for s in set.iter_mut() {
                stats.apply(&mut s.frames)?;
            }
        }
    }
    Ok(())
}

fn augmented(cfg: &ExperimentConfig, train: &[SequenceObservation], seed: u64) -> Result<Vec<SequenceObservation>> {
    match &cfg.augment {
        Some(a) => augment_subsequences(train, a, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => Ok(train.to_vec()),
    }
}

fn evaluate<T: Scalar>(model: &DaRnnModel<T>, test: &[SequenceObservation], p_th: f64) -> Result<MetricsReport> {
    let labels = test
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::Schema(format!("test sample `{}` has no label", s.id))))
        .collect::<Result<Vec<_>>>()?;
    let results = anticipate_all(model, test, p_th, false)?;
    compute_metrics(&results, &labels)
}

/// Pooled-driver protocol: hold out a test split, cross-validate on the
/// rest, and test the fold model with the lowest validation loss.
pub fn run_experiment_1<T: Scalar>(dataset: &[SequenceObservation], cfg: &ExperimentConfig) -> Result<Experiment1Report> {
    let eta = check_widths(&[dataset])?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 1]));
    let (rest_idx, test_idx) = train_test_split(dataset.len(), cfg.test_fraction, &mut rng)?;
    let mut rest = pick(dataset, &rest_idx);
    let mut test = pick(dataset, &test_idx);
    let normalization = fit_stats(cfg, "experiment1-trainval", &[&rest])?;
    apply_stats(&normalization, &mut [&mut rest, &mut test])?;
    let folds = k_fold(&(0..rest.len()).collect::<Vec<_>>(), cfg.folds, &mut rng)?;
    let net = network_for(cfg, eta);

    let mut summaries = Vec::new();
    let mut best: Option<(f64, usize, DaRnnModel<T>)> = None;
    for (f, (train_idx, val_idx)) in folds.iter().enumerate() {
        let train = augmented(cfg, &pick(&rest, train_idx), derive_seed(&[cfg.seed, 2, f as u64]))?;
        let val = pick(&rest, val_idx);
        let model = DaRnnModel::new(net.clone(), derive_seed(&[cfg.seed, 3, f as u64]))?;
        let tc = TrainConfig { seed: derive_seed(&[cfg.seed, 4, f as u64]), ..cfg.train.clone() };
        let out = train_supervised(model, &train, &val, &tc)?;
        let val_loss = out.history[out.best_epoch].val_l_y;
        summaries.push(FoldSummary {
            fold: f,
            best_epoch: out.best_epoch,
            best_val_loss: val_loss,
            epochs_run: out.history.len(),
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, f, out.model));
        }
    }
    let (_, chosen_fold, model) = best.expect("at least two folds");
    Ok(Experiment1Report {
        test: evaluate(&model, &test, cfg.p_th)?,
        folds: summaries,
        chosen_fold,
        test_ids: test.iter().map(|s| s.id.clone()).collect(),
        normalization,
    })
}

fn strip_labels(set: &mut [SequenceObservation]) {
    for s in set {
        s.label = None;
        s.domain = Domain::Target;
    }
}

fn summary<T>(condition: Condition, out: &TrainOutcome<T>, metrics: MetricsReport) -> ConditionResult {
    ConditionResult { condition, best_epoch: out.best_epoch, epochs_run: out.history.len(), metrics }
}

/// Runs the three conditions on already split sets. Labels of
/// `target_train` are never read.
pub fn run_adaptation<T: Scalar>(
    source: &[SequenceObservation],
    target_train: &[SequenceObservation],
    target_test: &[SequenceObservation],
    cfg: &ExperimentConfig,
    tag: u64,
) -> Result<AdaptationReport> {
    let eta = check_widths(&[source, target_train, target_test])?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, tag, 10]));
    let (tr_idx, val_idx) = train_test_split(source.len(), cfg.val_fraction, &mut rng)?;
    let mut src_train = pick(source, &tr_idx);
    let mut src_val = pick(source, &val_idx);
    let mut tgt_train = target_train.to_vec();
    let mut tgt_test = target_test.to_vec();
    strip_labels(&mut tgt_train);
    let stats = fit_stats(cfg, "source", &[&src_train, &src_val])?;
    apply_stats(&stats, &mut [&mut src_train, &mut src_val, &mut tgt_train, &mut tgt_test])?;
    let src_train = augmented(cfg, &src_train, derive_seed(&[cfg.seed, tag, 11]))?;
    let net = network_for(cfg, eta);
    let init_seed = derive_seed(&[cfg.seed, tag, 12]);
    let train_cfg = TrainConfig { seed: derive_seed(&[cfg.seed, tag, 13]), ..cfg.train.clone() };
    let adapt_cfg = TrainConfig {
        max_epochs: cfg.adapt_epochs.unwrap_or(train_cfg.max_epochs),
        ..train_cfg.clone()
    };
    let ft_cfg = TrainConfig { restore_best: adapt_cfg.restore_best && cfg.fine_tune_restore_best, ..adapt_cfg.clone() };

    // Adversarial batches are half source, so the baseline sees the same source stream.
    let base_cfg = TrainConfig { batch_size: (train_cfg.batch_size / 2).max(1), ..train_cfg.clone() };
    let base = train_supervised(DaRnnModel::<T>::new(net.clone(), init_seed)?, &src_train, &src_val, &base_cfg)?;
    let base_metrics = evaluate(&base.model, &tgt_test, cfg.p_th)?;

    let da = train_adversarial(DaRnnModel::<T>::new(net.clone(), init_seed)?, &src_train, &tgt_train, &src_val, &adapt_cfg)?;
    let da_metrics = evaluate(&da.model, &tgt_test, cfg.p_th)?;

    let donor = Checkpoint::from_model(&base.model, None);
    let mut ft_model = DaRnnModel::<T>::new(net, init_seed)?;
    fine_tune_init(&mut ft_model, &donor, cfg.fine_tune_head, derive_seed(&[cfg.seed, tag, 14]))?;
    let ft = train_adversarial(ft_model, &src_train, &tgt_train, &src_val, &ft_cfg)?;
    let ft_metrics = evaluate(&ft.model, &tgt_test, cfg.p_th)?;

    Ok(AdaptationReport {
        test_ids: tgt_test.iter().map(|s| s.id.clone()).collect(),
        conditions: vec![
            summary(Condition::NoAdaptation, &base, base_metrics),
            summary(Condition::DomainAdversarial, &da, da_metrics),
            summary(Condition::DomainAdversarialFineTuned, &ft, ft_metrics),
        ],
    })
}

fn means(reports: &[&AdaptationReport]) -> Vec<MeanMetrics> {
    let n = reports.len().max(1) as f64;
    Condition::ALL
        .iter()
        .map(|&c| {
            let ms: Vec<&MetricsReport> = reports.iter().map(|r| &r.get(c).metrics).collect();
            MeanMetrics {
                condition: c,
                precision: ms.iter().map(|m| m.precision).sum::<f64>() / n,
                recall: ms.iter().map(|m| m.recall).sum::<f64>() / n,
                f1: ms.iter().map(|m| m.f1).sum::<f64>() / n,
                mean_ttp: ms.iter().map(|m| m.mean_ttp).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Leave-one-driver-out: each eligible driver in turn is the unlabelled
/// target domain; results are averaged over drivers.
pub fn run_experiment_2<T: Scalar>(dataset: &[SequenceObservation], cfg: &ExperimentConfig) -> Result<LodoReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 20]));
    let splits = lodo_splits(dataset, cfg.target_test_fraction, &mut rng)?;
    let mut drivers = Vec::new();
    for (k, split) in splits.iter().enumerate() {
        log::info!("lodo: holding out `{}`", split.held_out);
        let report = run_adaptation::<T>(
            &pick(dataset, &split.source),
            &pick(dataset, &split.target_train),
            &pick(dataset, &split.target_test),
            cfg,
            100 + k as u64,
        )?;
        drivers.push(DriverReport { driver: split.held_out.clone(), report });
    }
    let mean = means(&drivers.iter().map(|d| &d.report).collect::<Vec<_>>());
    Ok(LodoReport { drivers, mean })
}

fn split_target(target: &[SequenceObservation], cfg: &ExperimentConfig) -> Result<(Vec<SequenceObservation>, Vec<SequenceObservation>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 30]));
    let (tr, te) = train_test_split(target.len(), cfg.target_test_fraction, &mut rng)?;
    Ok((pick(target, &tr), pick(target, &te)))
}

/// Dataset-to-dataset adaptation: `target` is split into an unlabelled
/// training part and a labelled test part.
pub fn run_experiment_3<T: Scalar>(
    source: &[SequenceObservation],
    target: &[SequenceObservation],
    cfg: &ExperimentConfig,
) -> Result<AdaptationReport> {
    check_widths(&[source, target])?;
    let (tt, te) = split_target(target, cfg)?;
    run_adaptation::<T>(source, &tt, &te, cfg, 31)
}

/// Target F1 of the adversarial condition for each `λ`.
pub fn lambda_sweep<T: Scalar>(
    source: &[SequenceObservation],
    target: &[SequenceObservation],
    lambdas: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Vec<LambdaPoint>> {
    let eta = check_widths(&[source, target])?;
    let (tt, te) = split_target(target, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 31, 10]));
    let (tr_idx, val_idx) = train_test_split(source.len(), cfg.val_fraction, &mut rng)?;
    let mut src_train = pick(source, &tr_idx);
    let mut src_val = pick(source, &val_idx);
    let mut tgt_train = tt;
    let mut tgt_test = te;
    strip_labels(&mut tgt_train);
    let stats = fit_stats(cfg, "source", &[&src_train, &src_val])?;
    apply_stats(&stats, &mut [&mut src_train, &mut src_val, &mut tgt_train, &mut tgt_test])?;
    let src_train = augmented(cfg, &src_train, derive_seed(&[cfg.seed, 31, 11]))?;
    let net = network_for(cfg, eta);
    let mut points = Vec::new();
    for &lambda in lambdas {
        let mut tc = cfg.train.clone();
        tc.seed = derive_seed(&[cfg.seed, 31, 13]);
        tc.adversarial.lambda = lambda;
        tc.max_epochs = cfg.adapt_epochs.unwrap_or(tc.max_epochs);
        let model = DaRnnModel::<T>::new(net.clone(), derive_seed(&[cfg.seed, 31, 12]))?;
        let out = train_adversarial(model, &src_train, &tgt_train, &src_val, &tc)?;
        let m = evaluate(&out.model, &tgt_test, cfg.p_th)?;
        points.push(LambdaPoint { lambda, f1: m.f1, mean_ttp: m.mean_ttp });
    }
    Ok(points)
}
