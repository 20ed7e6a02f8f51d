//! Central finite-difference checks of every analytic gradient.
//!
//! Each suite builds seeded random parameters and inputs, runs the analytic
//! backward pass once, then perturbs every parameter entry (and every input
//! entry for the layer suites) by `±step` and compares.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt::Write;

use crate::data::batching::derive_seed;
use crate::error::Result;
use crate::losses::{domain_loss, AnticipationLossConfig, Domain, GradientReversal};
use crate::network::{
    full_forward_backward, BatchItem, BatchSettings, DaRnnModel, DomainInput, NetworkConfig, SequenceInput,
    DOMAIN_LAYERS,
};
use crate::nn::init::uniform;
use crate::nn::{
    dense_softmax, dense_softmax_backward, dense_tanh, dense_tanh_backward, gru_backward_sequence,
    gru_forward_sequence, lstm_backward_sequence, lstm_forward_sequence, DenseParams, GateActivation, GruMasks,
    GruParams, GruReading, LstmMasks, LstmParams, Matrix, ParamSet, PeepholeMode,
};
use crate::scalar::{Precision, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub abs_floor: f64,
    pub sizes: Vec<usize>,
    pub seq_len: usize,
    pub seed: u64,
}

impl GradcheckOptions {
    pub fn for_precision(precision: Precision) -> Self {
        match precision {
            Precision::F64 => GradcheckOptions {
                step: 1e-6,
                tolerance: 1e-5,
                abs_floor: 1e-3,
                sizes: vec![2, 4, 8],
                seq_len: 4,
                seed: 0,
            },
            Precision::F32 => GradcheckOptions {
                step: 1e-2,
                tolerance: 1e-2,
                abs_floor: 1e-2,
                sizes: vec![2, 4, 8],
                seq_len: 4,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub suite: String,
    pub config: String,
    pub tensor: String,
    pub entries: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub precision: Precision,
    pub options: GradcheckOptions,
    pub configs: usize,
    pub checks: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub passed: bool,
}

impl GradcheckReport {
    /// Largest relative error per suite, in first-seen order.
    pub fn by_suite(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for c in &self.checks {
            match out.iter_mut().find(|(s, _)| *s == c.suite) {
                Some((_, m)) => *m = m.max(c.max_rel_error),
                None => out.push((c.suite.clone(), c.max_rel_error)),
            }
        }
        out
    }

    pub fn render(&self) -> String {
        let tol = self.options.tolerance;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "gradcheck precision={} step={:e} tolerance={:e} configs={}",
            self.precision.as_str(),
            self.options.step,
            tol,
            self.configs
        );
        let _ = writeln!(out, "{:<10} {:<34} {:<22} {:>7} {:>11}", "suite", "config", "tensor", "entries", "max rel");
        for c in &self.checks {
            let flag = if c.max_rel_error < tol { "" } else { "  FAIL" };
            let _ = writeln!(
                out,
                "{:<10} {:<34} {:<22} {:>7} {:>11.3e}{flag}",
                c.suite, c.config, c.tensor, c.entries, c.max_rel_error
            );
        }
        let _ = writeln!(out, "per suite:");
        for (s, m) in self.by_suite() {
            let _ = writeln!(out, "  {s:<10} {m:.3e}");
        }
        let _ = writeln!(out, "{}", if self.passed { "PASS" } else { "FAIL" });
        out
    }
}

struct Checker<'a> {
    opts: &'a GradcheckOptions,
    checks: Vec<TensorCheck>,
}

impl Checker<'_> {
    fn rel(&self, a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(self.opts.abs_floor)
    }

    /// Compares `analytic` with `factor · dF/dv` for every entry of `values`.
    fn entries<T: Scalar>(
        &mut self,
        suite: &str,
        config: &str,
        tensor: &str,
        values: &mut [T],
        analytic: &[T],
        factor: f64,
        f: &mut dyn FnMut(&[T]) -> Result<T>,
    ) -> Result<()> {
        let h = T::of(self.opts.step);
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        for k in 0..values.len() {
            let orig = values[k];
            values[k] = orig + h;
            let fp = f(values)?;
            values[k] = orig - h;
            let fm = f(values)?;
            values[k] = orig;
            let numeric = factor * ((fp - fm) / (h + h)).as_f64();
            let a = analytic[k].as_f64();
            max_abs = max_abs.max((a - numeric).abs());
            max_rel = max_rel.max(self.rel(a, numeric));
        }
        self.checks.push(TensorCheck {
            suite: suite.into(),
            config: config.into(),
            tensor: tensor.into(),
            entries: values.len(),
            max_abs_error: max_abs,
            max_rel_error: max_rel,
        });
        Ok(())
    }

    /// Checks every tensor of a parameter set.
    fn params<T: Scalar, P: ParamSet<T> + Clone>(
        &mut self,
        suite: &str,
        config: &str,
        names: &[String],
        params: &P,
        analytic: &P,
        factor: &dyn Fn(&str) -> f64,
        objective: &dyn Fn(&P, &str) -> Result<T>,
    ) -> Result<()> {
        let grads: Vec<Vec<T>> = analytic.tensors().iter().map(|(_, t)| t.as_slice().to_vec()).collect();
        for (i, name) in names.iter().enumerate() {
            let mut work = params.clone();
            let mut values = work.tensors()[i].1.as_slice().to_vec();
            let mut f = |v: &[T]| -> Result<T> {
                work.tensors_mut()[i].1.as_mut_slice().copy_from_slice(v);
                objective(&work, name)
            };
            self.entries(suite, config, name, &mut values, &grads[i], factor(name), &mut f)?;
        }
        Ok(())
    }

    /// Checks the gradient on a sequence of input vectors.
    fn inputs<T: Scalar>(
        &mut self,
        suite: &str,
        config: &str,
        xs: &[Vec<T>],
        dxs: &[Vec<T>],
        objective: &dyn Fn(&[Vec<T>]) -> Result<T>,
    ) -> Result<()> {
        let width = xs.first().map_or(0, Vec::len);
        let mut flat: Vec<T> = xs.concat();
        let analytic: Vec<T> = dxs.concat();
        let mut f = |v: &[T]| -> Result<T> {
            let rows: Vec<Vec<T>> = v.chunks(width).map(<[T]>::to_vec).collect();
            objective(&rows)
        };
        self.entries(suite, config, "input", &mut flat, &analytic, 1.0, &mut f)
    }
}

fn randomize<T: Scalar, P: ParamSet<T>>(p: &mut P, scale: f64, rng: &mut ChaCha8Rng) {
    for (_, t) in p.tensors_mut() {
        *t = uniform(t.rows(), t.cols(), scale, rng);
    }
}

fn random_rows<T: Scalar>(n: usize, width: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    (0..n).map(|_| (0..width).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect()).collect()
}

fn dot_rows<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> T {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| p * q)).sum()
}

fn names<T: Scalar, P: ParamSet<T>>(p: &P) -> Vec<String> {
    p.tensors().iter().map(|(n, _)| (*n).to_string()).collect()
}

/// Pairs `(H, D)` drawn cyclically from the configured sizes.
fn size_pairs(sizes: &[usize]) -> Vec<(usize, usize)> {
    let n = sizes.len();
    (0..n).map(|i| (sizes[i], sizes[(i + 1) % n])).collect()
}

fn lstm_suite<T: Scalar>(ck: &mut Checker<'_>, rng_seed: u64) -> Result<usize> {
    let mut configs = 0;
    let len = ck.opts.seq_len;
    for (pi, (h, d)) in size_pairs(&ck.opts.sizes).into_iter().enumerate() {
        for gates in [GateActivation::AsPrinted, GateActivation::Conventional] {
            for peep in [PeepholeMode::FullMatrix, PeepholeMode::Diagonal] {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[rng_seed, 1, configs as u64]));
                let mut p = LstmParams::<T>::zeros(d, h, peep, gates);
                randomize(&mut p, 0.8, &mut rng);
                let xs = random_rows::<T>(len, d, &mut rng);
                let up = random_rows::<T>(len, h, &mut rng);
                let masks = if (pi + configs) % 2 == 1 { Some(LstmMasks::sample(h, 0.5, &mut rng)?) } else { None };
                let config = format!("H={h} D={d} {gates:?} {peep:?}{}", if masks.is_some() { " masked" } else { "" });

                let trace = lstm_forward_sequence(&p, &xs, masks.clone(), true)?;
                let mut grads = LstmParams::zeros(d, h, peep, gates);
                let dxs = lstm_backward_sequence(&p, &trace, &up, &mut grads)?;
                let objective = |q: &LstmParams<T>, xs: &[Vec<T>]| -> Result<T> {
                    Ok(dot_rows(&lstm_forward_sequence(q, xs, masks.clone(), false)?.hidden, &up))
                };
                ck.params("lstm", &config, &names(&p), &p, &grads, &|_| 1.0, &|q, _| objective(q, &xs))?;
                ck.inputs("lstm", &config, &xs, &dxs, &|x| objective(&p, x))?;
                configs += 1;
            }
        }
    }
    Ok(configs)
}

fn gru_suite<T: Scalar>(ck: &mut Checker<'_>, rng_seed: u64) -> Result<usize> {
    let mut configs = 0;
    let len = ck.opts.seq_len;
    for (h, d) in size_pairs(&ck.opts.sizes) {
        for reading in [GruReading::Standard, GruReading::Swapped] {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[rng_seed, 2, configs as u64]));
            let mut p = GruParams::<T>::zeros(d, h, reading);
            randomize(&mut p, 0.8, &mut rng);
            let xs = random_rows::<T>(len, d, &mut rng);
            let up = random_rows::<T>(len, h, &mut rng);
            let masks = if configs % 2 == 1 { Some(GruMasks::sample(h, 0.5, &mut rng)?) } else { None };
            let config = format!("H={h} D={d} {reading:?}{}", if masks.is_some() { " masked" } else { "" });

            let trace = gru_forward_sequence(&p, &xs, masks.clone(), true)?;
            let mut grads = GruParams::zeros(d, h, reading);
            let dxs = gru_backward_sequence(&p, &trace, &up, &mut grads)?;
            let objective = |q: &GruParams<T>, xs: &[Vec<T>]| -> Result<T> {
                Ok(dot_rows(&gru_forward_sequence(q, xs, masks.clone(), false)?.hidden, &up))
            };
            ck.params("gru", &config, &names(&p), &p, &grads, &|_| 1.0, &|q, _| objective(q, &xs))?;
            ck.inputs("gru", &config, &xs, &dxs, &|x| objective(&p, x))?;
            configs += 1;
        }
    }
    Ok(configs)
}

fn dense_suite<T: Scalar>(ck: &mut Checker<'_>, rng_seed: u64) -> Result<usize> {
    let mut configs = 0;
    for (out, inp) in size_pairs(&ck.opts.sizes) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[rng_seed, 3, configs as u64]));
        let mut p = DenseParams::<T>::zeros(inp, out);
        randomize(&mut p, 0.8, &mut rng);
        let x = random_rows::<T>(1, inp, &mut rng);

        // tanh layer against a random projection
        let up = random_rows::<T>(1, out, &mut rng);
        let y = dense_tanh(&p, &x[0])?;
        let mut grads = DenseParams::zeros(inp, out);
        let dx = dense_tanh_backward(&p, &x[0], &y, &up[0], &mut grads);
        let tanh_obj =
            |q: &DenseParams<T>, x: &[Vec<T>]| -> Result<T> { Ok(dot_rows(&[dense_tanh(q, &x[0])?], &up)) };
        let config = format!("tanh out={out} in={inp}");
        ck.params("dense", &config, &names(&p), &p, &grads, &|_| 1.0, &|q, _| tanh_obj(q, &x))?;
        ck.inputs("dense", &config, &x, &[dx], &|x| tanh_obj(&p, x))?;
        configs += 1;

        // softmax layer under cross-entropy
        let class = rng.gen_range(0..out);
        let (probs, _) = dense_softmax(&p, &x[0])?;
        let dlogits: Vec<T> =
            probs.iter().enumerate().map(|(j, &pj)| if j == class { pj - T::one() } else { pj }).collect();
        let mut grads = DenseParams::zeros(inp, out);
        let dx = dense_softmax_backward(&p, &x[0], &dlogits, &mut grads);
        let ce_obj = |q: &DenseParams<T>, x: &[Vec<T>]| -> Result<T> { Ok(-dense_softmax(q, &x[0])?.0[class].ln()) };
        let config = format!("softmax out={out} in={inp}");
        ck.params("dense", &config, &names(&p), &p, &grads, &|_| 1.0, &|q, _| ce_obj(q, &x))?;
        ck.inputs("dense", &config, &x, &[dx], &|x| ce_obj(&p, x))?;
        configs += 1;
    }
    Ok(configs)
}

fn toy_input<T: Scalar>(cfg: &NetworkConfig, len: usize, rng: &mut ChaCha8Rng) -> SequenceInput<T> {
    SequenceInput {
        phi: random_rows(len, cfg.phi_dim, rng),
        gamma: random_rows(len, cfg.gamma_dim, rng),
        eta: random_rows(len, cfg.eta_dim, rng),
    }
}

/// The whole network on a mixed batch: two labelled source rows and two
/// unlabelled target rows, dropout on, adversarial branch live. Extractor and
/// manoeuvre-head tensors are checked against `L_y − λ L_d`; domain-head
/// tensors against `L_d`.
fn network_suite<T: Scalar>(ck: &mut Checker<'_>, rng_seed: u64) -> Result<usize> {
    let mut configs = 0;
    let lambdas = [0.5, 1.1, 2.0];
    for (k, &h) in ck.opts.sizes.clone().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[rng_seed, 4, k as u64]));
        let mut cfg = NetworkConfig::compact(h);
        cfg.recurrent_dropout = 0.3;
        cfg.output_dropout = 0.3;
        cfg.gate_activation = if k % 2 == 0 { GateActivation::AsPrinted } else { GateActivation::Conventional };
        cfg.peephole_mode = if k % 2 == 0 { PeepholeMode::FullMatrix } else { PeepholeMode::Diagonal };
        cfg.domain_input = if k % 2 == 0 { DomainInput::FinalStep } else { DomainInput::EveryStep };
        let model = DaRnnModel::<T>::new(cfg.clone(), rng.gen())?;
        let lambda = lambdas[k % lambdas.len()];
        let inputs: Vec<SequenceInput<T>> = (0..4).map(|_| toy_input(&cfg, ck.opts.seq_len, &mut rng)).collect();
        let items: Vec<BatchItem<'_, T>> = inputs
            .iter()
            .enumerate()
            .map(|(i, input)| {
                let source = i < 2;
                BatchItem {
                    input,
                    class: source.then(|| (i * 3 + 1) % 5),
                    weight: if source { T::one() } else { T::zero() },
                    domain: if source { Domain::Source } else { Domain::Target },
                    seed: derive_seed(&[rng_seed, 40, i as u64]),
                }
            })
            .collect();
        let settings = BatchSettings {
            loss: AnticipationLossConfig::default(),
            lambda: T::of(lambda),
            adversarial: true,
            train: true,
        };
        let analytic = full_forward_backward(&model, &items, &settings)?;
        let config = format!("h={h} {:?} lambda={lambda}", cfg.gate_activation);
        let is_domain = |name: &str| DOMAIN_LAYERS.iter().any(|l| name.starts_with(&format!("{l}.")));
        let objective = |p: &crate::network::DaRnnParams<T>, name: &str| -> Result<T> {
            let m = DaRnnModel { config: cfg.clone(), params: p.clone() };
            let out = full_forward_backward(&m, &items, &settings)?;
            Ok(if is_domain(name) { out.l_d } else { out.l_tot })
        };
        let tensor_names = model.params.qualified_names();
        ck.params("network", &config, &tensor_names, &model.params, &analytic.grads, &|_| 1.0, &objective)?;
        configs += 1;
    }
    Ok(configs)
}

/// A two-parameter extractor `f = a·x + b` feeding a one-weight sigmoid
/// domain head through the reversal layer. The extractor must receive
/// `−λ ∂L_d`, the head `+∂L_d`.
fn grl_suite<T: Scalar>(ck: &mut Checker<'_>, rng_seed: u64) -> Result<usize> {
    let mut configs = 0;
    for (k, lambda) in [0.5, 1.1].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[rng_seed, 5, k as u64]));
        let x = T::of(rng.gen_range(-1.0..1.0));
        let w = T::of(rng.gen_range(-1.5..1.5));
        let extractor = DenseParams { w: uniform(1, 1, 1.0, &mut rng), b: uniform(1, 1, 1.0, &mut rng) };
        let domain = if k == 0 { Domain::Source } else { Domain::Target };
        let loss = |e: &DenseParams<T>, w: T| -> T {
            let f = e.w.get(0, 0) * x + e.b.get(0, 0);
            domain_loss(crate::nn::sigmoid(w * f), domain).0
        };

        let f = extractor.w.get(0, 0) * x + extractor.b.get(0, 0);
        let (_, dlogit) = domain_loss(crate::nn::sigmoid(w * f), domain);
        let dw = dlogit * f;
        let df = dlogit * w;
        let grl = GradientReversal::new(T::of(lambda));
        let g = grl.backward(&[df])[0];
        let grads = DenseParams { w: Matrix::filled(1, 1, g * x), b: Matrix::filled(1, 1, g) };
        let config = format!("toy lambda={lambda}");
        let tensor_names = vec!["extractor.w".to_string(), "extractor.b".to_string()];
        ck.params("grl", &config, &tensor_names, &extractor, &grads, &|_| -lambda, &|e, _| Ok(loss(e, w)))?;
        let mut wv = [w];
        ck.entries("grl", &config, "head.w", &mut wv, &[dw], 1.0, &mut |v| Ok(loss(&extractor, v[0])))?;
        configs += 1;
    }
    Ok(configs)
}

/// Runs every suite in precision `T`.
pub fn run_gradcheck<T: Scalar>(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut ck = Checker { opts, checks: Vec::new() };
    let mut configs = 0;
    configs += lstm_suite::<T>(&mut ck, opts.seed)?;
    configs += gru_suite::<T>(&mut ck, opts.seed)?;
    configs += dense_suite::<T>(&mut ck, opts.seed)?;
    configs += network_suite::<T>(&mut ck, opts.seed)?;
    configs += grl_suite::<T>(&mut ck, opts.seed)?;
    let max_rel_error = ck.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        precision: T::PRECISION,
        options: opts.clone(),
        configs,
        passed: max_rel_error < opts.tolerance,
        max_rel_error,
        checks: ck.checks,
    })
}
