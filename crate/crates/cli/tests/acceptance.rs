//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
//!
//! The benchmark criteria take tens of minutes on one core. Set
//! `DARNN_ACCEPTANCE_SKIP=lodo,crossdomain` to leave them out (they are then
//! reported as SKIP, never as PASS).

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use darnn_core::data::{generate_synthetic, Manoeuvre, SequenceObservation, SynthConfig};
use darnn_core::evaluation::benchmark::{self, CONTROL_TOLERANCE, CROSS_MARGIN, LODO_MARGIN};
use darnn_core::evaluation::{anticipate_all, anticipate_probs, compute_metrics, AnticipationResult, Condition, DEFAULT_THRESHOLD};
use darnn_core::features::{angular_bin, horizontal_bin, motion_angle, ButterworthLowpass, GazeConfig};
use darnn_core::gradcheck::{run_gradcheck, GradcheckOptions};
use darnn_core::losses::{anticipation_loss, AnticipationLossConfig, Domain, GradientReversal};
use darnn_core::network::{
    full_forward_backward, two_pass_reference, BatchItem, BatchSettings, DaRnnModel, NetworkConfig,
    SequenceInput, DOMAIN_LAYERS,
};
use darnn_core::nn::{BiasScope, ParamSet};
use darnn_core::training::{train_adversarial, train_supervised, Monitor, TrainConfig};
use darnn_core::Precision;

struct Line {
    name: &'static str,
    status: Status,
    detail: String,
}

enum Status {
    Pass,
    Fail,
    Skip,
}

fn check(name: &'static str, pass: bool, detail: String) -> Line {
    Line { name, status: if pass { Status::Pass } else { Status::Fail }, detail }
}

fn gradient_integrity() -> Line {
    let start = Instant::now();
    let report = run_gradcheck::<f64>(&GradcheckOptions::for_precision(Precision::F64)).expect("gradcheck runs");
    let secs = start.elapsed().as_secs_f64();
    check(
        "gradient integrity",
        report.passed && report.configs >= 20 && secs < 120.0,
        format!("{} configs, max rel err {:.2e} (tol 1e-5), {secs:.1}s (limit 120s)", report.configs, report.max_rel_error),
    )
}

fn loss_law() -> Line {
    let cfg = AnticipationLossConfig::default();
    let w: Vec<f64> = cfg.weights(10);
    let last_is_one = w[9] == 1.0;
    let ratio_err = w.windows(2).map(|p| (p[1] / p[0] - 0.9f64.exp()).abs()).fold(0.0, f64::max);
    let probs = vec![vec![0.2; 5]; 3];
    let loss = anticipation_loss(&probs, 1, &cfg).expect("loss").loss;
    let expr = ((-1.8f64).exp() + (-0.9f64).exp() + 1.0) * -(0.2f64.ln());
    check(
        "loss law",
        last_is_one && ratio_err < 1e-9 && (loss - expr).abs() < 1e-4,
        format!(
            "w(T)=1 {last_is_one}, ratio err {ratio_err:.1e}, fixture {loss:.6} vs expression {expr:.6} (printed literal 2.5302 differs by {:.1e})",
            (loss - 2.5302).abs()
        ),
    )
}

fn tiny_net() -> NetworkConfig {
    NetworkConfig {
        h_phi: 6,
        h_gamma: 5,
        h_a: 6,
        h_eta: 3,
        h_z: 5,
        domain_hidden: 4,
        recurrent_dropout: 0.3,
        output_dropout: 0.3,
        recurrent_bias_scope: BiasScope::ForgetGate,
        ..NetworkConfig::default()
    }
}

fn tiny_data(domain: Domain, per_class: usize, seed: u64) -> Vec<SequenceObservation> {
    generate_synthetic(&SynthConfig {
        counts: [per_class; 5],
        seq_len: 24,
        head_lead: 12,
        head_burst: 6,
        gaze_lead: 8,
        domain,
        id_prefix: format!("{domain:?}"),
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic data")
}

fn max_abs_diff(a: &impl ParamSet<f64>, b: &impl ParamSet<f64>) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|((_, x), (_, y))| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

fn grl_contract() -> Line {
    let x: [f64; 4] = [0.3, -1.7, 2.5e-8, 1e300];
    let g: [f64; 4] = [1.0, -0.75, 3.0, -2.0e-10];
    let grl = GradientReversal::new(1.1);
    let fwd_ok = grl.forward(&x).iter().zip(&x).all(|(a, b)| a.to_bits() == b.to_bits());
    let bwd_ok = grl.backward(&g).iter().zip(&g).all(|(a, b)| *a == -1.1 * b);

    let src = tiny_data(Domain::Source, 4, 11);
    let tgt = tiny_data(Domain::Target, 2, 12);
    let val = tiny_data(Domain::Source, 1, 13);
    let model = DaRnnModel::<f64>::new(tiny_net(), 5).expect("model");
    let short = |batch_size| TrainConfig { batch_size, max_epochs: 3, patience: 10, seed: 9, ..TrainConfig::default() };
    let sup = train_supervised(model.clone(), &src, &val, &short(6)).expect("supervised");
    let mut cfg = short(12);
    cfg.adversarial.lambda = 0.0;
    let adv = train_adversarial(model, &src, &tgt, &val, &cfg).expect("adversarial");
    let a = sup.model.params;
    let b = adv.model.params;
    let mut same = true;
    for ((layer, x), (_, y)) in a.layers().into_iter().zip(b.layers()) {
        if !DOMAIN_LAYERS.contains(&layer) {
            same &= x.iter().zip(&y).all(|((_, p), (_, q))| p.as_slice() == q.as_slice());
        }
    }
    let hist = |h: &[darnn_core::training::EpochRecord]| h.iter().map(|r| (r.l_y, r.val_l_y)).collect::<Vec<_>>();
    same &= hist(&sup.history) == hist(&adv.history);
    check(
        "GRL contract",
        fwd_ok && bwd_ok && same,
        format!("forward bit-identical {fwd_ok}, backward = -λ·g {bwd_ok}, λ=0 run equals supervised bit-for-bit {same}"),
    )
}

fn rows<'a>(inputs: &'a [SequenceInput<f64>], set: &[SequenceObservation], domain: Domain, w: f64) -> Vec<BatchItem<'a, f64>> {
    inputs
        .iter()
        .zip(set)
        .enumerate()
        .map(|(k, (input, s))| BatchItem { input, class: s.class(), weight: w, domain, seed: 100 + k as u64 })
        .collect()
}

fn masking_contract() -> Line {
    let model = DaRnnModel::<f64>::new(tiny_net(), 3).expect("model");
    let src = tiny_data(Domain::Source, 2, 1);
    let tgt = tiny_data(Domain::Target, 2, 2);
    let si: Vec<_> = src.iter().map(|s| s.to_input()).collect();
    let ti: Vec<_> = tgt.iter().map(|s| s.to_input()).collect();
    let settings = BatchSettings { loss: Default::default(), lambda: 1.1, adversarial: true, train: true };
    let target_only = full_forward_backward(&model, &rows(&ti, &tgt, Domain::Target, 0.0), &settings).expect("batch");
    let head_zero = target_only.grads.head.w.as_slice().iter().chain(target_only.grads.head.b.as_slice()).all(|&g| g == 0.0);
    let mut mixed = rows(&si, &src, Domain::Source, 1.0);
    mixed.extend(rows(&ti, &tgt, Domain::Target, 0.0));
    let one = full_forward_backward(&model, &mixed, &settings).expect("single pass");
    let two = two_pass_reference(&model, &mixed, &settings).expect("two pass");
    let diff = max_abs_diff(&one.grads, &two.grads).max((one.l_tot - two.l_tot).abs());
    check(
        "masking contract",
        head_zero && diff < 1e-10,
        format!("target rows give zero head gradient {head_zero}, single vs two-pass max diff {diff:.1e} (tol 1e-10)"),
    )
}

fn overfit_sanity() -> Line {
    let start = Instant::now();
    let set = generate_synthetic(&benchmark::separable_config(10, 1)).expect("data");
    let model = DaRnnModel::<f64>::new(benchmark::overfit_network(), 2).expect("model");
    let cfg = TrainConfig { max_epochs: 500, patience: 500, monitor: Monitor::ValF1, ..benchmark::overfit_training() };
    let out = train_supervised(model, &set, &set, &cfg).expect("training");
    let labels: Vec<Manoeuvre> = set.iter().filter_map(|s| s.label).collect();
    let results = anticipate_all(&out.model, &set, cfg.p_th, false).expect("anticipation");
    let f1 = compute_metrics(&results, &labels).expect("metrics").f1;
    let secs = start.elapsed().as_secs_f64();
    check(
        "overfit sanity",
        set.len() == 50 && f1 >= 0.95 && out.history.len() <= 500 && secs < 300.0,
        format!("training F1 {:.3} (need 0.95) on {} sequences, best epoch {}, {secs:.0}s (limit 300s)", f1, set.len(), out.best_epoch),
    )
}

fn lodo_direction() -> Line {
    let start = Instant::now();
    let mut f1 = [0.0; 3];
    let seeds = benchmark::SEEDS;
    for seed in 0..seeds {
        let report = benchmark::run_lodo(seed).expect("lodo benchmark");
        for (k, c) in [Condition::NoAdaptation, Condition::DomainAdversarial, Condition::DomainAdversarialFineTuned].into_iter().enumerate() {
            f1[k] += report.mean_of(c).f1 * 100.0 / seeds as f64;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        "LODO direction",
        f1[0] < f1[1] && f1[1] < f1[2] && f1[1] >= f1[0] + LODO_MARGIN && secs < 1800.0,
        format!(
            "mean target F1 {:.1} < {:.1} < {:.1}, DA gain {:+.1} (need +{LODO_MARGIN}), {secs:.0}s (limit 1800s)",
            f1[0],
            f1[1],
            f1[2],
            f1[1] - f1[0]
        ),
    )
}

fn cross_domain_direction() -> Line {
    let mut shifted = [0.0; 3];
    let mut control = [0.0; 3];
    let seeds = benchmark::SEEDS;
    for seed in 0..seeds {
        for (acc, shift) in [(&mut shifted, benchmark::strong_shift()), (&mut control, Default::default())] {
            let report = benchmark::run_cross_domain(seed, &shift).expect("cross-domain benchmark");
            for (k, c) in report.conditions.iter().enumerate() {
                acc[k] += c.metrics.f1 * 100.0 / seeds as f64;
            }
        }
    }
    let spread = control.iter().cloned().fold(f64::MIN, f64::max) - control.iter().cloned().fold(f64::MAX, f64::min);
    check(
        "cross-domain direction",
        shifted[1] >= shifted[0] + CROSS_MARGIN && shifted[2] >= shifted[1] + CROSS_MARGIN && spread < CONTROL_TOLERANCE,
        format!(
            "shifted {:.1} -> {:.1} -> {:.1} (margins {:+.1}, {:+.1}, need {CROSS_MARGIN}); control {:.1} {:.1} {:.1} (spread {spread:.1}, need < {CONTROL_TOLERANCE})",
            shifted[0],
            shifted[1],
            shifted[2],
            shifted[1] - shifted[0],
            shifted[2] - shifted[1],
            control[0],
            control[1],
            control[2]
        ),
    )
}

fn darnn(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_darnn")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn feature_pipeline() -> Line {
    let bins_ok = [(-6.0, 0), (-5.0, 0), (-4.999, 1), (-2.5, 1), (0.0, 2), (1e-12, 3), (2.5, 3), (5.0, 4), (5.0001, 5)]
        .iter()
        .all(|&(dx, b)| horizontal_bin(dx) == b)
        && angular_bin(motion_angle(0.0, 0.0)) == 3
        && angular_bin(motion_angle(1.0, 1.0)) == 0
        && angular_bin(motion_angle(-1.0, 0.0)) == 1
        && angular_bin(motion_angle(0.0, -1.0)) == 2;
    let g = GazeConfig::default();
    let filter = ButterworthLowpass::new(g.order, g.sample_rate_hz, g.cutoff_hz).expect("filter");
    let dc = filter.magnitude(0.0);
    let atten = -20.0 * filter.magnitude(15.0).log10();

    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("features.jsonl");
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/featurize");
    let ran = darnn(&[
        "featurize",
        "--input",
        fx.join("clips").to_str().unwrap(),
        "--context",
        fx.join("context.csv").to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--include-speed",
    ]);
    let golden = ran && fs::read(&out).ok() == fs::read(fx.join("expected.jsonl")).ok();
    check(
        "feature pipeline",
        bins_ok && (dc - 1.0).abs() <= 1e-6 && atten >= 40.0 && golden,
        format!("bin edges {bins_ok}, DC gain {dc:.9}, {atten:.1} dB at 15 Hz (need 40), golden featurize byte-identical {golden}"),
    )
}

fn metrics_oracle() -> Line {
    use Manoeuvre::*;
    let rows = [
        (LaneLeft, LaneLeft, 4.0),
        (LaneLeft, LaneLeft, 3.0),
        (LaneLeft, Straight, 0.0),
        (LaneRight, LaneRight, 2.5),
        (LaneRight, LaneLeft, 3.9),
        (LaneRight, LaneRight, 1.0),
        (TurnLeft, TurnLeft, 3.5),
        (TurnLeft, TurnRight, 2.2),
        (TurnLeft, TurnLeft, 2.0),
        (TurnRight, TurnRight, 1.5),
        (TurnRight, Straight, 0.0),
        (Straight, TurnLeft, 4.5),
    ];
    let labels: Vec<Manoeuvre> = rows.iter().map(|r| r.0).collect();
    let results: Vec<AnticipationResult> = rows
        .iter()
        .map(|r| AnticipationResult { predicted: r.1, t_star: None, ttp: r.2, len: 150, trajectory: Vec::new() })
        .collect();
    let m = compute_metrics(&results, &labels).expect("metrics");
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let fixture = close(m.precision, 17.0 / 24.0)
        && close(m.recall, 5.0 / 8.0)
        && close(m.f1, 85.0 / 128.0)
        && close(m.lane_change.f1, 20.0 / 27.0)
        && close(m.turn.f1, 7.0 / 12.0)
        && m.ttp_count == 7
        && close(m.mean_ttp, 2.5);

    let crossing = |t: usize, class: usize| -> Vec<Vec<f64>> {
        (1..=150)
            .map(|k| {
                let mut p = vec![0.2; 5];
                if k >= t {
                    p = vec![0.025; 5];
                    p[class] = 0.9;
                }
                p
            })
            .collect()
    };
    let first = anticipate_probs(&crossing(1, 4), DEFAULT_THRESHOLD).expect("anticipation");
    let last = anticipate_probs(&crossing(150, 1), DEFAULT_THRESHOLD).expect("anticipation");
    let never = anticipate_probs(&vec![vec![0.2; 5]; 150], DEFAULT_THRESHOLD).expect("anticipation");
    let first_ok = first.predicted == TurnRight && (first.ttp - 4.97).abs() < 5e-3;
    let last_ok = last.predicted == LaneLeft && last.ttp == 0.0;
    let never_ok = never.predicted == Straight && never.ttp == 0.0;
    check(
        "metrics oracle",
        fixture && first_ok && last_ok && never_ok,
        format!(
            "12-sample fixture P/R/F1/TTP exact {fixture}; first-frame {:.4}s {first_ok}, final-frame {}s {last_ok}, no crossing {:?}/{}s {never_ok}",
            first.ttp, last.ttp, never.predicted, never.ttp
        ),
    )
}

const SMOKE_CONFIG: &str = r#"
version = 1
lambdas = [0.0, 1.1]

[synth]
counts = [4, 4, 4, 4, 4]
seq_len = 20
head_lead = 10
head_burst = 5
gaze_lead = 6

[experiment]
seed = 11

[experiment.augment]
min_len = 8
max_len = 19
target_per_class = 6

[experiment.network]
h_phi = 4
h_gamma = 4
h_a = 4
h_eta = 2
h_z = 4
domain_hidden = 3

[experiment.train]
batch_size = 8
max_epochs = 4
"#;

fn determinism() -> Line {
    let dir = tempfile::tempdir().expect("tempdir");
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    fs::write(p("cfg.toml"), SMOKE_CONFIG).expect("config");
    let mut ok = darnn(&["synth", "--config", &p("cfg.toml"), "--output", &p("src.jsonl")]);
    for run in ["a", "b"] {
        ok &= darnn(&["--threads", "1", "train", "--config", &p("cfg.toml"), "--source", &p("src.jsonl"), "--out", &p(run)]);
        ok &= darnn(&["--threads", "1", "crossdomain", "--config", &p("cfg.toml"), "--source", &p("src.jsonl"), "--target", &p("src.jsonl"), "--out", &p(&format!("x{run}"))]);
    }
    let same = |a: &str, b: &str| fs::read(p(a)).ok().is_some_and(|x| Some(x) == fs::read(p(b)).ok());
    let identical = ["checkpoint.json", "report.json", "report.txt"].iter().all(|f| same(&format!("a/{f}"), &format!("b/{f}")))
        && ["report.json", "report.txt"].iter().all(|f| same(&format!("xa/{f}"), &format!("xb/{f}")));
    check(
        "determinism",
        ok && identical,
        format!("commands succeeded {ok}; train checkpoint/report and crossdomain report byte-identical across --threads 1 reruns {identical}"),
    )
}

fn main() {
    // `cargo test` passes harness flags; a filter argument limits the run.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let skip = std::env::var("DARNN_ACCEPTANCE_SKIP").unwrap_or_default();
    let criteria: [(&str, &'static str, fn() -> Line); 10] = [
        ("gradient", "gradient integrity", gradient_integrity),
        ("loss", "loss law", loss_law),
        ("grl", "GRL contract", grl_contract),
        ("masking", "masking contract", masking_contract),
        ("overfit", "overfit sanity", overfit_sanity),
        ("lodo", "LODO direction", lodo_direction),
        ("crossdomain", "cross-domain direction", cross_domain_direction),
        ("features", "feature pipeline", feature_pipeline),
        ("metrics", "metrics oracle", metrics_oracle),
        ("determinism", "determinism", determinism),
    ];
    let mut failed = 0;
    for (key, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| key.contains(f.as_str())) {
            continue;
        }
        let line = if skip.split(',').any(|s| s.trim() == key) {
            Line { name, status: Status::Skip, detail: "skipped via DARNN_ACCEPTANCE_SKIP".into() }
        } else {
            run()
        };
        let tag = match line.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("{tag} {}: {}", line.name, line.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
