//! Desk-scale synthetic benchmarks for the adaptation protocols.
//!
//! Every function is a pure function of its seed, so a benchmark run can be
//! repeated exactly.

use crate::data::{
    generate_drivers, generate_synthetic, AugmentConfig, DomainShift, SequenceObservation, SynthConfig,
};
use crate::evaluation::experiments::{run_experiment_2, run_experiment_3, AdaptationReport, ExperimentConfig, LodoReport};
use crate::losses::Domain;
use crate::network::{DomainInput, NetworkConfig};
use crate::nn::BiasScope;
use crate::training::{AdamConfig, Monitor, TrainConfig};
use crate::Result;

/// Seeds averaged by each benchmark.
pub const SEEDS: u64 = 5;
/// Required gain of adversarial training over no adaptation on LODO, in F1 points.
pub const LODO_MARGIN: f64 = 10.0;
/// Required gap between consecutive conditions on the cross-domain pair.
pub const CROSS_MARGIN: f64 = 5.0;
/// Largest F1 spread allowed across conditions without a shift.
pub const CONTROL_TOLERANCE: f64 = 5.0;

pub const SEQ_LEN: usize = 40;

/// Source-domain generator shared by both benchmarks.
pub fn base_synth(per_class: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        counts: [per_class; 5],
        seq_len: SEQ_LEN,
        head_lead: 30,
        head_burst: 20,
        gaze_lead: 20,
        glance_prob: 0.0,
        seed,
        ..SynthConfig::default()
    }
}

/// Target shift of the cross-domain pair.
pub fn strong_shift() -> DomainShift {
    DomainShift { pose_offset: [0.0, 0.2, 0.0], ..DomainShift::default() }
}

/// One shift per driver. The first two push head cues right and left, the
/// third weakens head motion, the fourth delays gaze and the fifth tilts
/// the head.
pub fn driver_shifts() -> Vec<DomainShift> {
    vec![
        DomainShift { pose_offset: [0.0, 0.3, 0.0], bin_shift: 2, ..DomainShift::default() },
        DomainShift { pose_offset: [0.0, -0.3, 0.0], bin_shift: -2, ..DomainShift::default() },
        DomainShift { amplitude_scale: -0.6, ..DomainShift::default() },
        DomainShift { lead_time_offset: -10, ..DomainShift::default() },
        DomainShift { pose_offset: [0.1, 0.0, 0.0], ..DomainShift::default() },
    ]
}

pub fn network() -> NetworkConfig {
    NetworkConfig {
        recurrent_bias_scope: BiasScope::ForgetGate,
        domain_input: DomainInput::EveryStep,
        recurrent_dropout: 0.3,
        output_dropout: 0.3,
        ..NetworkConfig::compact(8)
    }
}

/// Shared settings; `max_epochs`, `patience` and the augmentation target
/// size the run.
pub fn experiment(seed: u64, max_epochs: usize, patience: usize, per_class: usize) -> ExperimentConfig {
    let train = TrainConfig {
        batch_size: 16,
        max_epochs,
        patience,
        monitor: Monitor::ValF1,
        clip_norm: Some(1.0),
        adam: AdamConfig { lr: 6e-3, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    ExperimentConfig {
        network: network(),
        train,
        augment: Some(AugmentConfig { min_len: SEQ_LEN / 3, max_len: SEQ_LEN - 1, target_per_class: Some(per_class) }),
        fine_tune_restore_best: false,
        seed,
        ..ExperimentConfig::default()
    }
}

pub fn cross_domain_experiment(seed: u64) -> ExperimentConfig {
    experiment(seed, 200, 50, 48)
}

/// Smaller budget: LODO trains fifteen models per seed.
pub fn lodo_experiment(seed: u64) -> ExperimentConfig {
    experiment(seed, 80, 25, 32)
}

/// Labelled source set and shifted target set for one seed.
pub fn cross_domain_pair(
    seed: u64,
    shift: &DomainShift,
) -> Result<(Vec<SequenceObservation>, Vec<SequenceObservation>)> {
    let base = base_synth(24, seed * 1000);
    let source = generate_synthetic(&base)?;
    let target = generate_synthetic(&SynthConfig {
        counts: [40; 5],
        shift: *shift,
        domain: Domain::Target,
        id_prefix: "tgt".into(),
        seed: seed * 1000 + 1,
        ..base
    })?;
    Ok((source, target))
}

pub fn run_cross_domain(seed: u64, shift: &DomainShift) -> Result<AdaptationReport> {
    let (source, target) = cross_domain_pair(seed, shift)?;
    run_experiment_3::<f64>(&source, &target, &cross_domain_experiment(seed))
}

/// Five drivers, each with its own shift, as one labelled dataset.
pub fn lodo_dataset(seed: u64) -> Result<Vec<SequenceObservation>> {
    generate_drivers(&SynthConfig { id_prefix: "drv".into(), driver_prefix: "driver".into(), ..base_synth(6, seed * 1000 + 7) }, &driver_shifts())
}

pub fn run_lodo(seed: u64) -> Result<LodoReport> {
    run_experiment_2::<f64>(&lodo_dataset(seed)?, &lodo_experiment(seed))
}

/// Low-noise classes whose cues span the whole sequence.
pub fn separable_config(per_class: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        noise: 0.02,
        head_lead: SEQ_LEN,
        head_burst: SEQ_LEN,
        gaze_lead: SEQ_LEN,
        ..base_synth(per_class, seed)
    }
}

pub fn overfit_network() -> NetworkConfig {
    NetworkConfig { recurrent_dropout: 0.0, output_dropout: 0.0, ..network() }
}

pub fn overfit_training() -> TrainConfig {
    TrainConfig { batch_size: 10, adam: AdamConfig { lr: 6e-3, ..AdamConfig::default() }, ..TrainConfig::default() }
}
