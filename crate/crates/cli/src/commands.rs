use std::fs;
use std::path::{Path, PathBuf};

use darnn_core::data::batching::derive_seed;
use darnn_core::data::{
    augment_subsequences, generate_drivers, generate_synthetic, load_dataset, save_dataset, train_test_split,
    SequenceObservation,
};
use darnn_core::evaluation::report::{adaptation_table, lambda_table, lodo_table, metrics_table};
use darnn_core::evaluation::{
    anticipate_all, compute_metrics, lambda_sweep, run_experiment_2, run_experiment_3, MetricsReport,
};
use darnn_core::features::{featurize_dir, fit_normalization, FeatureConfig, NormalizationStats};
use darnn_core::gradcheck::{run_gradcheck, GradcheckOptions};
use darnn_core::losses::Domain;
use darnn_core::network::{Checkpoint, DaRnnModel, NetworkConfig};
use darnn_core::training::{
    fine_tune_init, history_jsonl, train_adversarial, train_supervised, TrainConfig, TrainOutcome,
};
use darnn_core::{Error, Precision, Result, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;

fn out_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn write_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("serialize {name}: {e}")))?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_file(dir, "config.toml", &cfg.to_toml()?)
}

fn labels(set: &[SequenceObservation]) -> Result<Vec<darnn_core::data::Manoeuvre>> {
    set.iter()
        .map(|s| s.label.ok_or_else(|| Error::Schema(format!("sample `{}` has no label", s.id))))
        .collect()
}

fn evaluate<T: Scalar>(model: &DaRnnModel<T>, set: &[SequenceObservation], p_th: f64) -> Result<MetricsReport> {
    let results = anticipate_all(model, set, p_th, false)?;
    compute_metrics(&results, &labels(set)?)
}

fn network_for(cfg: &NetworkConfig, set: &[SequenceObservation]) -> NetworkConfig {
    let mut net = cfg.clone();
    if let Some(s) = set.first() {
        net.eta_dim = s.eta_dim();
    }
    net
}

fn apply_stats(stats: &Option<NormalizationStats>, set: &mut [SequenceObservation]) -> Result<()> {
    if let Some(stats) = stats {
        for s in set {
            stats.apply(&mut s.frames)?;
        }
    }
    Ok(())
}

pub struct FeaturizeArgs<'a> {
    pub input: &'a Path,
    pub context: &'a Path,
    pub output: &'a Path,
    pub features: FeatureConfig,
}

pub fn featurize(args: &FeaturizeArgs<'_>) -> Result<()> {
    let (records, logs) = featurize_dir(args.input, args.context, &args.features)?;
    save_dataset(args.output, &records)?;
    let mut log_text = String::new();
    for l in &logs {
        log_text.push_str(&serde_json::to_string(l).expect("plain struct"));
        log_text.push('\n');
    }
    let log_path = PathBuf::from(format!("{}.log.jsonl", args.output.display()));
    fs::write(&log_path, log_text).map_err(|e| Error::io(&log_path, e))?;
    let invalid: usize = logs.iter().map(|l| l.invalid_landmark_frames + l.invalid_gaze_frames).sum();
    println!("featurized {} clips ({invalid} invalid frames) -> {}", records.len(), args.output.display());
    Ok(())
}

pub fn synth(cfg: &RunConfig, output: &Path) -> Result<()> {
    let records = if cfg.drivers.is_empty() {
        generate_synthetic(&cfg.synth)?
    } else {
        generate_drivers(&cfg.synth, &cfg.drivers)?
    };
    save_dataset(output, &records)?;
    println!("wrote {} sequences -> {}", records.len(), output.display());
    Ok(())
}

/// Source data after the validation split, normalization and augmentation.
struct PreparedSource {
    train: Vec<SequenceObservation>,
    val: Vec<SequenceObservation>,
    stats: Option<NormalizationStats>,
}

/// Shared by `train` and `adapt` so that both see identical rows for the
/// same seed.
fn prepare_source(
    cfg: &RunConfig,
    source: &[SequenceObservation],
    val: Option<Vec<SequenceObservation>>,
    stats: Option<Option<NormalizationStats>>,
) -> Result<PreparedSource> {
    let exp = &cfg.experiment;
    let (mut train, mut val) = match val {
        Some(v) => (source.to_vec(), v),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[exp.seed, 40]));
            let (tr, va) = train_test_split(source.len(), exp.val_fraction, &mut rng)?;
            (tr.iter().map(|&i| source[i].clone()).collect(), va.iter().map(|&i| source[i].clone()).collect())
        }
    };
    let stats = match stats {
        Some(s) => s,
        None if exp.normalize => Some(fit_normalization("train", train.iter().map(|s| s.frames.as_slice()))?),
        None => None,
    };
    apply_stats(&stats, &mut train)?;
    apply_stats(&stats, &mut val)?;
    if let Some(a) = &exp.augment {
        train = augment_subsequences(&train, a, &mut ChaCha8Rng::seed_from_u64(derive_seed(&[exp.seed, 41])))?;
    }
    Ok(PreparedSource { train, val, stats })
}

#[derive(Serialize)]
struct TrainReport<'a> {
    best_epoch: usize,
    epochs_run: usize,
    best_score: f64,
    val_loss: f64,
    validation: &'a MetricsReport,
}

fn write_training_outputs<T: Scalar>(
    dir: &Path,
    cfg: &RunConfig,
    out: &TrainOutcome<T>,
    prep: &PreparedSource,
    name: &str,
) -> Result<()> {
    let metrics = evaluate(&out.model, &prep.val, cfg.experiment.p_th)?;
    Checkpoint::from_model(&out.model, prep.stats.clone()).save(&dir.join("checkpoint.json"))?;
    write_file(dir, "history.jsonl", &history_jsonl(&out.history))?;
    let report = TrainReport {
        best_epoch: out.best_epoch,
        epochs_run: out.history.len(),
        best_score: out.best_score,
        val_loss: out.history[out.best_epoch].val_l_y,
        validation: &metrics,
    };
    write_json(dir, "report.json", &report)?;
    let table = metrics_table(name, &metrics);
    write_file(dir, "report.txt", &table)?;
    print!("{table}");
    Ok(())
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig { seed: derive_seed(&[cfg.experiment.seed, 43]), p_th: cfg.experiment.p_th, ..cfg.experiment.train.clone() }
}

pub fn train<T: Scalar>(cfg: &RunConfig, source: &Path, val: Option<&Path>, out: &Path) -> Result<()> {
    let dir = out_dir(out)?;
    echo_config(&dir, cfg)?;
    let data = load_dataset(source)?;
    let val = val.map(load_dataset).transpose()?;
    let prep = prepare_source(cfg, &data, val, None)?;
    let net = network_for(&cfg.experiment.network, &data);
    let model = DaRnnModel::<T>::new(net, derive_seed(&[cfg.experiment.seed, 42]))?;
    let outcome = train_supervised(model, &prep.train, &prep.val, &train_config(cfg))?;
    write_training_outputs(&dir, cfg, &outcome, &prep, "Supervised")
}

pub struct AdaptArgs<'a> {
    pub source: &'a Path,
    pub target: &'a Path,
    pub val: Option<&'a Path>,
    pub donor: Option<&'a Path>,
    pub out: &'a Path,
}

pub fn adapt<T: Scalar>(cfg: &RunConfig, args: &AdaptArgs<'_>) -> Result<()> {
    let dir = out_dir(args.out)?;
    echo_config(&dir, cfg)?;
    let data = load_dataset(args.source)?;
    let mut target = load_dataset(args.target)?;
    for t in &mut target {
        t.label = None;
        t.domain = Domain::Target;
    }
    let donor = args.donor.map(Checkpoint::load).transpose()?;
    let val = args.val.map(load_dataset).transpose()?;
    let prep = prepare_source(cfg, &data, val, donor.as_ref().map(|d| d.normalization.clone()))?;
    apply_stats(&prep.stats, &mut target)?;
    let net = network_for(&cfg.experiment.network, &data);
    let mut model = DaRnnModel::<T>::new(net, derive_seed(&[cfg.experiment.seed, 42]))?;
    let name = match &donor {
        Some(d) => {
            fine_tune_init(&mut model, d, cfg.experiment.fine_tune_head, derive_seed(&[cfg.experiment.seed, 44]))?;
            "DA-RNN + fine-tuning"
        }
        None => "DA-RNN",
    };
    let mut tc = train_config(cfg);
    if let Some(e) = cfg.experiment.adapt_epochs {
        tc.max_epochs = e;
    }
    if donor.is_some() {
        tc.restore_best &= cfg.experiment.fine_tune_restore_best;
    }
    let outcome = train_adversarial(model, &prep.train, &target, &prep.val, &tc)?;
    write_training_outputs(&dir, cfg, &outcome, &prep, name)
}

pub fn eval<T: Scalar>(ck: &Checkpoint, data: &Path, p_th: f64, trajectories: bool, out: &Path) -> Result<()> {
    let dir = out_dir(out)?;
    let model: DaRnnModel<T> = ck.to_model()?;
    let mut set = load_dataset(data)?;
    apply_stats(&ck.normalization, &mut set)?;
    let results = anticipate_all(&model, &set, p_th, trajectories)?;
    let metrics = compute_metrics(&results, &labels(&set)?)?;
    write_json(&dir, "report.json", &metrics)?;
    let table = metrics_table("Evaluation", &metrics);
    write_file(&dir, "report.txt", &table)?;
    if trajectories {
        #[derive(Serialize)]
        struct Row<'a> {
            id: &'a str,
            predicted: darnn_core::data::Manoeuvre,
            t_star: Option<usize>,
            ttp: f64,
            probs: &'a [Vec<f64>],
        }
        let mut text = String::new();
        for (s, r) in set.iter().zip(&results) {
            let row = Row { id: &s.id, predicted: r.predicted, t_star: r.t_star, ttp: r.ttp, probs: &r.trajectory };
            text.push_str(&serde_json::to_string(&row).expect("plain struct"));
            text.push('\n');
        }
        write_file(&dir, "trajectories.jsonl", &text)?;
    }
    print!("{table}");
    Ok(())
}

pub fn lodo<T: Scalar>(cfg: &RunConfig, source: &Path, out: &Path) -> Result<()> {
    let dir = out_dir(out)?;
    echo_config(&dir, cfg)?;
    let data = load_dataset(source)?;
    let report = run_experiment_2::<T>(&data, &cfg.experiment)?;
    write_json(&dir, "report.json", &report)?;
    let mut text = lodo_table(&report);
    for d in &report.drivers {
        text.push_str(&format!("\nHeld out: {}\n", d.driver));
        text.push_str(&adaptation_table(&d.report));
    }
    write_file(&dir, "report.txt", &text)?;
    print!("{}", lodo_table(&report));
    Ok(())
}

pub fn crossdomain<T: Scalar>(cfg: &RunConfig, source: &Path, target: &Path, out: &Path) -> Result<()> {
    let dir = out_dir(out)?;
    echo_config(&dir, cfg)?;
    let src = load_dataset(source)?;
    let tgt = load_dataset(target)?;
    let report = run_experiment_3::<T>(&src, &tgt, &cfg.experiment)?;
    write_json(&dir, "report.json", &report)?;
    let table = adaptation_table(&report);
    write_file(&dir, "report.txt", &table)?;
    print!("{table}");
    if !cfg.lambdas.is_empty() {
        let points = lambda_sweep::<T>(&src, &tgt, &cfg.lambdas, &cfg.experiment)?;
        write_json(&dir, "lambda.json", &points)?;
        let t = lambda_table(&points);
        write_file(&dir, "lambda.txt", &t)?;
        print!("{t}");
    }
    Ok(())
}

pub struct GradcheckArgs<'a> {
    pub precision: Precision,
    pub sizes: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
}

/// Returns whether every suite passed.
pub fn gradcheck(args: &GradcheckArgs<'_>) -> Result<bool> {
    let mut opts = GradcheckOptions::for_precision(args.precision);
    if let Some(s) = &args.sizes {
        if s.is_empty() || s.contains(&0) {
            return Err(Error::Config("gradcheck sizes must be positive".into()));
        }
        opts.sizes = s.clone();
    }
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    let report = match args.precision {
        Precision::F64 => run_gradcheck::<f64>(&opts)?,
        Precision::F32 => run_gradcheck::<f32>(&opts)?,
    };
    let text = report.render();
    if let Some(out) = args.out {
        let dir = out_dir(out)?;
        write_json(&dir, "gradcheck.json", &report)?;
        write_file(&dir, "gradcheck.txt", &text)?;
    }
    print!("{text}");
    Ok(report.passed)
}
