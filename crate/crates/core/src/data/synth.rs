//! Class-conditional synthetic sequences with controllable domain shift.
//!
//! Each manoeuvre with a side gets a head-motion burst toward that side, a
//! gaze drift toward it starting a fixed lead before onset, and lane and
//! intersection flags consistent with the manoeuvre. Straight samples get
//! none of these beyond label-independent noise and distractor glances.
//! [`DomainShift`] then transforms the head cues deterministically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batching::derive_seed;
use super::{Manoeuvre, SequenceObservation, Side, MAX_SEQUENCE_LEN, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::histogram::{ANGULAR_BINS, HORIZONTAL_BINS};
use crate::features::{gaze::gaze_one_hot, FrameFeatures, NUM_LANDMARKS};
use crate::losses::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainShift {
    /// Extra factor on the head-burst amplitude (0 means unchanged).
    pub amplitude_scale: f64,
    /// Frames added to the gaze lead (negative: gaze moves later).
    pub lead_time_offset: i32,
    /// Reflect head motion and yaw/roll left to right.
    pub mirror: bool,
    /// Move horizontal-histogram mass by this many bins, saturating at the ends.
    pub bin_shift: i32,
    /// Added to pitch, yaw, roll.
    pub pose_offset: [f64; 3],
}

impl DomainShift {
    pub fn validate(&self) -> Result<()> {
        if !self.amplitude_scale.is_finite() || self.amplitude_scale <= -1.0 {
            return Err(Error::Config(format!("amplitude_scale {} must be finite and > -1", self.amplitude_scale)));
        }
        if self.bin_shift.unsigned_abs() as usize >= HORIZONTAL_BINS {
            return Err(Error::Config(format!("bin_shift {} overflows {HORIZONTAL_BINS} bins", self.bin_shift)));
        }
        if self.mirror && self.bin_shift != 0 {
            return Err(Error::Config("mirror and bin_shift cannot be combined".into()));
        }
        if !self.pose_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("pose_offset must be finite".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == DomainShift::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Samples per class in straight, lane_left, lane_right, turn_left, turn_right order.
    pub counts: [usize; NUM_CLASSES],
    pub seq_len: usize,
    /// Fraction of landmarks moving toward the manoeuvre side at burst peak.
    pub head_amplitude: f64,
    /// Frames before onset at which the head burst starts.
    pub head_lead: usize,
    pub head_burst: usize,
    /// Peak yaw excursion during the burst (radians).
    pub pose_amplitude: f64,
    /// Frames before onset at which gaze starts drifting.
    pub gaze_lead: usize,
    /// Steady gaze x after the drift.
    pub gaze_amplitude: f64,
    /// Label-independent noise level; 0 gives noise-free cues.
    pub noise: f64,
    /// Probability of a short head/gaze glance toward a random side.
    pub glance_prob: f64,
    pub include_speed: bool,
    pub domain: Domain,
    pub shift: DomainShift,
    pub id_prefix: String,
    pub driver_prefix: String,
    pub num_drivers: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            counts: [20; NUM_CLASSES],
            seq_len: MAX_SEQUENCE_LEN,
            head_amplitude: 0.6,
            head_lead: 60,
            head_burst: 30,
            pose_amplitude: 0.35,
            gaze_lead: 75,
            gaze_amplitude: 0.8,
            noise: 0.1,
            glance_prob: 0.2,
            include_speed: false,
            domain: Domain::Source,
            shift: DomainShift::default(),
            id_prefix: "syn".into(),
            driver_prefix: "driver".into(),
            num_drivers: 1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.shift.validate()?;
        if self.seq_len == 0 || self.seq_len > MAX_SEQUENCE_LEN {
            return Err(Error::Config(format!("seq_len {} outside 1..={MAX_SEQUENCE_LEN}", self.seq_len)));
        }
        if self.num_drivers == 0 {
            return Err(Error::Config("num_drivers must be positive".into()));
        }
        for (name, v) in [
            ("head_amplitude", self.head_amplitude),
            ("pose_amplitude", self.pose_amplitude),
            ("gaze_amplitude", self.gaze_amplitude),
            ("noise", self.noise),
            ("glance_prob", self.glance_prob),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.head_amplitude > 1.0 || self.glance_prob > 1.0 || self.gaze_amplitude > 1.0 {
            return Err(Error::Config("head_amplitude, gaze_amplitude and glance_prob must be at most 1".into()));
        }
        Ok(())
    }
}

fn side_sign(side: Side) -> f64 {
    match side {
        Side::Left => -1.0,
        Side::Right => 1.0,
        Side::None => 0.0,
    }
}

/// Standard normal via Box-Muller.
fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Smooth 0→1→0 bump over `[start, start + len)`.
fn bump(t: usize, start: usize, len: usize) -> f64 {
    if len == 0 || t < start || t >= start + len {
        return 0.0;
    }
    (std::f64::consts::PI * (t - start) as f64 / len as f64).sin()
}

/// Smooth 0→1 ramp starting at `start` over `len` frames, then held.
fn ramp(t: usize, start: usize, len: usize) -> f64 {
    if t < start {
        0.0
    } else if len == 0 || t >= start + len {
        1.0
    } else {
        0.5 - 0.5 * (std::f64::consts::PI * (t - start) as f64 / len as f64).cos()
    }
}

struct Glance {
    sign: f64,
    start: usize,
    len: usize,
}

fn head_histograms<R: Rng>(
    moving: f64,
    sign: f64,
    noise: f64,
    shift: &DomainShift,
    rng: &mut R,
) -> ([f64; HORIZONTAL_BINS], [f64; ANGULAR_BINS]) {
    let n = NUM_LANDMARKS;
    let m = ((moving.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut h = [0usize; HORIZONTAL_BINS];
    let mut a = [0usize; ANGULAR_BINS];
    if m > 0 {
        let strong = m / 2;
        let (hs, hm, a_up, a_down) = if sign < 0.0 { (0, 1, 1, 2) } else { (5, 4, 0, 3) };
        h[hs] += strong;
        h[hm] += m - strong;
        a[a_up] += m - m / 2;
        a[a_down] += m / 2;
    }
    let rest = n - m;
    // Jittering landmarks: with zero noise the rest are static.
    let jitter = if noise > 0.0 { ((noise * rng.gen::<f64>() * 2.0).min(1.0) * rest as f64) as usize } else { 0 };
    h[2] += rest - jitter;
    a[3] += rest - jitter;
    for _ in 0..jitter {
        h[if rng.gen::<bool>() { 2 } else { 3 }] += 1;
        a[rng.gen_range(0..ANGULAR_BINS)] += 1;
    }
    if shift.mirror {
        h.reverse();
        a.swap(0, 1);
        a.swap(2, 3);
    }
    if shift.bin_shift != 0 {
        let mut shifted = [0usize; HORIZONTAL_BINS];
        for (b, &c) in h.iter().enumerate() {
            let nb = (b as i32 + shift.bin_shift).clamp(0, HORIZONTAL_BINS as i32 - 1) as usize;
            shifted[nb] += c;
        }
        h = shifted;
    }
    let nf = n as f64;
    (h.map(|c| c as f64 / nf), a.map(|c| c as f64 / nf))
}

fn generate_one(cfg: &SynthConfig, label: Manoeuvre, index: usize) -> SequenceObservation {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, index as u64]));
    let len = cfg.seq_len;
    let shift = &cfg.shift;
    let sign = side_sign(label.side());
    let jitter = |rng: &mut ChaCha8Rng, lead: usize| -> usize {
        let j = if cfg.noise > 0.0 { (normal(rng) * cfg.noise * 10.0).round() as i64 } else { 0 };
        (lead as i64 + j).clamp(0, len as i64) as usize
    };
    let head_lead = jitter(&mut rng, cfg.head_lead);
    let gaze_lead = jitter(&mut rng, (cfg.gaze_lead as i64 + shift.lead_time_offset as i64).max(0) as usize);
    let head_start = len - head_lead.min(len);
    let gaze_start = len - gaze_lead.min(len);
    let amplitude = cfg.head_amplitude * (1.0 + shift.amplitude_scale);

    let glance = if rng.gen::<f64>() < cfg.glance_prob && len > 20 {
        let glen = (len / 10).max(4);
        Some(Glance {
            sign: if rng.gen::<bool>() { 1.0 } else { -1.0 },
            start: rng.gen_range(0..len.saturating_sub(glen).max(1)),
            len: glen,
        })
    } else {
        None
    };

    let (mut lane_left, mut lane_right) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
    match label {
        Manoeuvre::LaneLeft => lane_left = true,
        Manoeuvre::LaneRight => lane_right = true,
        _ => {}
    }
    let intersection = match label {
        Manoeuvre::TurnLeft | Manoeuvre::TurnRight => true,
        Manoeuvre::LaneLeft | Manoeuvre::LaneRight => false,
        Manoeuvre::Straight => rng.gen_bool(0.5),
    };
    let base_speed = if label.is_turn() { 30.0 } else { 60.0 };
    let speed = base_speed + cfg.noise * 50.0 * normal(&mut rng);
    let gaze_y0 = -0.1 + cfg.noise * normal(&mut rng);

    let mut frames = Vec::with_capacity(len);
    let mut gx_noise = 0.0;
    for t in 0..len {
        let burst = bump(t, head_start, cfg.head_burst);
        let g = glance.as_ref().map_or(0.0, |g| bump(t, g.start, g.len));
        let g_sign = glance.as_ref().map_or(0.0, |g| g.sign);
        let (moving, msign) =
            if burst * sign.abs() >= g { (amplitude * burst * sign.abs(), sign) } else { (cfg.head_amplitude * g, g_sign) };
        let (h, a) = head_histograms(moving, msign, cfg.noise, shift, &mut rng);

        let mirror = if shift.mirror { -1.0 } else { 1.0 };
        let yaw = mirror * (cfg.pose_amplitude * (sign * burst + g_sign * g)) + shift.pose_offset[1]
            + cfg.noise * 0.05 * normal(&mut rng);
        let pitch = shift.pose_offset[0] + cfg.noise * 0.05 * normal(&mut rng);
        let roll = shift.pose_offset[2] + mirror * cfg.noise * 0.05 * normal(&mut rng);

        gx_noise = 0.9 * gx_noise + cfg.noise * 0.1 * normal(&mut rng);
        let gx = sign * cfg.gaze_amplitude * ramp(t, gaze_start, 15) + g_sign * cfg.gaze_amplitude * g + gx_noise;
        let gy = gaze_y0 + cfg.noise * 0.05 * normal(&mut rng);

        let mut phi = Vec::with_capacity(13);
        phi.extend_from_slice(&h);
        phi.extend_from_slice(&a);
        phi.extend_from_slice(&[pitch, yaw, roll]);
        let gamma = gaze_one_hot(gx, gy).to_vec();
        let mut eta = vec![f64::from(u8::from(lane_left)), f64::from(u8::from(lane_right)), f64::from(u8::from(intersection))];
        if cfg.include_speed {
            eta.push(speed.max(0.0));
        }
        frames.push(FrameFeatures { phi, gamma, eta });
    }
    SequenceObservation {
        id: format!("{}-{index:05}", cfg.id_prefix),
        driver_id: format!("{}{}", cfg.driver_prefix, index % cfg.num_drivers),
        domain: cfg.domain,
        label: Some(label),
        frames,
    }
}

/// Generates `cfg.counts` samples, labelled by construction, sorted by id.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<SequenceObservation>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (c, &n) in cfg.counts.iter().enumerate() {
        for _ in 0..n {
            jobs.push((Manoeuvre::ALL[c], jobs.len()));
        }
    }
    Ok(jobs.into_par_iter().map(|(label, index)| generate_one(cfg, label, index)).collect())
}

/// One group of `cfg.counts` samples per entry of `shifts`. Group `k`
/// belongs to driver `{driver_prefix}{k}` and replaces `cfg.shift` with
/// `shifts[k]`; seeds are derived from `cfg.seed` and `k`.
pub fn generate_drivers(cfg: &SynthConfig, shifts: &[DomainShift]) -> Result<Vec<SequenceObservation>> {
    if shifts.is_empty() {
        return Err(Error::Config("at least one driver shift is required".into()));
    }
    let mut out = Vec::new();
    for (k, shift) in shifts.iter().enumerate() {
        let group = SynthConfig {
            shift: *shift,
            id_prefix: format!("{}-d{k}", cfg.id_prefix),
            driver_prefix: format!("{}{k}", cfg.driver_prefix),
            num_drivers: 1,
            seed: derive_seed(&[cfg.seed, k as u64]),
            ..cfg.clone()
        };
        let mut records = generate_synthetic(&group)?;
        for r in &mut records {
            r.driver_id = group.driver_prefix.clone();
        }
        out.extend(records);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}
