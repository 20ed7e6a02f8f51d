use darnn_core::data::{generate_synthetic, SequenceObservation, SynthConfig};
use darnn_core::losses::Domain;
use darnn_core::network::{
    full_forward_backward, two_pass_reference, BatchItem, BatchSettings, Checkpoint, DaRnnModel, NetworkConfig,
    SequenceInput, DOMAIN_LAYERS,
};
use darnn_core::nn::{BiasScope, ParamSet};
use darnn_core::training::{fine_tune_init, train_adversarial, train_supervised, TrainConfig};

fn small_config() -> NetworkConfig {
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

fn data(domain: Domain, per_class: usize, seed: u64) -> Vec<SequenceObservation> {
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
    .unwrap()
}

fn items<'a>(
    inputs: &'a [SequenceInput<f64>],
    set: &[SequenceObservation],
    domain: Domain,
) -> Vec<BatchItem<'a, f64>> {
    inputs
        .iter()
        .zip(set)
        .enumerate()
        .map(|(k, (input, s))| BatchItem {
            input,
            class: s.class(),
            weight: if domain == Domain::Source { 1.0 } else { 0.0 },
            domain,
            seed: 1000 + k as u64,
        })
        .collect()
}

fn max_diff(a: &impl ParamSet<f64>, b: &impl ParamSet<f64>) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|((_, x), (_, y))| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

#[test]
fn single_pass_matches_two_pass_reference() {
    let model = DaRnnModel::<f64>::new(small_config(), 3).unwrap();
    let src = data(Domain::Source, 2, 1);
    let tgt = data(Domain::Target, 2, 2);
    let si: Vec<_> = src.iter().map(|s| s.to_input()).collect();
    let ti: Vec<_> = tgt.iter().map(|s| s.to_input()).collect();
    let mut batch = items(&si, &src, Domain::Source);
    batch.extend(items(&ti, &tgt, Domain::Target));
    let settings = BatchSettings { loss: Default::default(), lambda: 1.1, adversarial: true, train: true };

    let one = full_forward_backward(&model, &batch, &settings).unwrap();
    let two = two_pass_reference(&model, &batch, &settings).unwrap();
    assert!((one.l_y - two.l_y).abs() < 1e-10);
    assert!((one.l_d - two.l_d).abs() < 1e-10);
    assert!((one.l_tot - two.l_tot).abs() < 1e-10);
    assert!((one.l_tot - (one.l_y - 1.1 * one.l_d)).abs() < 1e-12);
    assert!(max_diff(&one.grads, &two.grads) < 1e-10);
}

#[test]
fn weight_zero_rows_never_reach_the_manoeuvre_head() {
    let model = DaRnnModel::<f64>::new(small_config(), 4).unwrap();
    let tgt = data(Domain::Target, 2, 5);
    let ti: Vec<_> = tgt.iter().map(|s| s.to_input()).collect();
    let settings = BatchSettings { loss: Default::default(), lambda: 1.1, adversarial: true, train: true };
    let out = full_forward_backward(&model, &items(&ti, &tgt, Domain::Target), &settings).unwrap();
    assert_eq!(out.l_y, 0.0);
    assert!(out.grads.head.w.as_slice().iter().chain(out.grads.head.b.as_slice()).all(|&g| g == 0.0));
    assert!(out.grads.domain_out.w.as_slice().iter().any(|&g| g != 0.0));
    assert!(out.grads.lstm_phi.tensors().iter().any(|(_, t)| t.as_slice().iter().any(|&g| g != 0.0)));

    // Adding target rows leaves the head gradient of the source rows unchanged.
    let src = data(Domain::Source, 1, 6);
    let si: Vec<_> = src.iter().map(|s| s.to_input()).collect();
    let source_only = BatchSettings { adversarial: false, ..settings };
    let base = full_forward_backward(&model, &items(&si, &src, Domain::Source), &source_only).unwrap();
    let mut mixed = items(&si, &src, Domain::Source);
    mixed.extend(items(&ti, &tgt, Domain::Target));
    let both = full_forward_backward(&model, &mixed, &settings).unwrap();
    assert!(max_diff(&base.grads.head, &both.grads.head) < 1e-12);
    assert!((base.l_y - both.l_y).abs() < 1e-12);
}

fn short_training(batch_size: usize) -> TrainConfig {
    TrainConfig { batch_size, max_epochs: 3, patience: 10, seed: 9, ..TrainConfig::default() }
}

#[test]
fn lambda_zero_reduces_to_supervised_training() {
    let src = data(Domain::Source, 4, 11);
    let tgt = data(Domain::Target, 2, 12);
    let val = data(Domain::Source, 1, 13);
    let model = DaRnnModel::<f64>::new(small_config(), 5).unwrap();

    let sup = train_supervised(model.clone(), &src, &val, &short_training(6)).unwrap();
    let mut cfg = short_training(12);
    cfg.adversarial.lambda = 0.0;
    let adv = train_adversarial(model, &src, &tgt, &val, &cfg).unwrap();

    for ((layer, a), (_, b)) in sup.model.params.layers().into_iter().zip(adv.model.params.layers()) {
        if DOMAIN_LAYERS.contains(&layer) {
            continue;
        }
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            assert_eq!(x.as_slice(), y.as_slice(), "{layer}.{name}");
        }
    }
    let losses = |h: &[darnn_core::training::EpochRecord]| h.iter().map(|r| (r.l_y, r.val_l_y)).collect::<Vec<_>>();
    assert_eq!(losses(&sup.history), losses(&adv.history));
    assert_eq!(sup.best_epoch, adv.best_epoch);
}

#[test]
fn fine_tune_copies_donor_layers_exactly() {
    let donor_model = DaRnnModel::<f64>::new(small_config(), 21).unwrap();
    let donor = Checkpoint::from_json_str(&Checkpoint::from_model(&donor_model, None).to_json_string(), "donor").unwrap();
    let mut model = DaRnnModel::<f64>::new(small_config(), 22).unwrap();
    fine_tune_init(&mut model, &donor, true, 77).unwrap();

    let mut fresh = DaRnnModel::<f64>::new(small_config(), 0).unwrap();
    fresh.reset_domain_head(77);
    for ((layer, got), ((_, want), (_, reset))) in
        model.params.layers().into_iter().zip(donor_model.params.layers().into_iter().zip(fresh.params.layers()))
    {
        let expected = if DOMAIN_LAYERS.contains(&layer) { &reset } else { &want };
        for ((name, x), (_, y)) in got.iter().zip(expected) {
            let (xb, yb): (Vec<u64>, Vec<u64>) =
                (x.as_slice().iter().map(|v| v.to_bits()).collect(), y.as_slice().iter().map(|v| v.to_bits()).collect());
            assert_eq!(xb, yb, "{layer}.{name}");
        }
    }

    let mut keep_head = DaRnnModel::<f64>::new(small_config(), 22).unwrap();
    let own_head = keep_head.params.head.clone();
    fine_tune_init(&mut keep_head, &donor, false, 77).unwrap();
    assert_eq!(keep_head.params.head, own_head);
    assert_eq!(keep_head.params.fusion, donor_model.params.fusion);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = DaRnnModel::<f64>::new(small_config(), 31).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    Checkpoint::from_model(&model, None).save(&path).unwrap();
    let back: DaRnnModel<f64> = Checkpoint::load(&path).unwrap().to_model().unwrap();
    assert_eq!(back, model);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let src = data(Domain::Source, 3, 41);
    let tgt = data(Domain::Target, 3, 42);
    let val = data(Domain::Source, 1, 43);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let model = DaRnnModel::<f64>::new(small_config(), 8).unwrap();
            let out = train_adversarial(model, &src, &tgt, &val, &short_training(10)).unwrap();
            let losses: Vec<_> = out.history.iter().map(|r| (r.l_y, r.l_d, r.val_l_y)).collect();
            (Checkpoint::from_model(&out.model, None).to_json_string(), losses)
        })
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(4));
}
