use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{DomainInput, NetworkConfig};
use crate::error::{Error, Result};
use crate::losses::GradientReversal;
use crate::nn::activation::{sigmoid, softmax, tanh_grad_from_output};
use crate::nn::dropout::{apply_mask, make_dropout_mask};
use crate::nn::{
    gru_backward_sequence, gru_forward_sequence, lstm_backward_sequence, lstm_forward_sequence, DenseParams,
    GruMasks, GruParams, GruTrace, LstmMasks, LstmParams, LstmTrace, Matrix, ParamSet,
};
use crate::scalar::Scalar;

/// One featurized sequence in model precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput<T> {
    pub phi: Vec<Vec<T>>,
    pub gamma: Vec<Vec<T>>,
    pub eta: Vec<Vec<T>>,
}

impl<T: Scalar> SequenceInput<T> {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Copy of the first `len` frames.
    pub fn prefix(&self, len: usize) -> Self {
        SequenceInput {
            phi: self.phi[..len].to_vec(),
            gamma: self.gamma[..len].to_vec(),
            eta: self.eta[..len].to_vec(),
        }
    }
}

/// Every trainable tensor of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct DaRnnParams<T> {
    pub lstm_phi: LstmParams<T>,
    pub lstm_gamma: LstmParams<T>,
    pub gru_a: GruParams<T>,
    pub lstm_eta: LstmParams<T>,
    pub fusion: DenseParams<T>,
    pub head: DenseParams<T>,
    pub domain_hidden: DenseParams<T>,
    pub domain_out: DenseParams<T>,
}

/// Layers shared with a fine-tuned model: the extractor.
pub const EXTRACTOR_LAYERS: [&str; 5] = ["lstm_phi", "lstm_gamma", "gru_a", "lstm_eta", "fusion"];
pub const HEAD_LAYER: &str = "head";
pub const DOMAIN_LAYERS: [&str; 2] = ["domain_hidden", "domain_out"];

impl<T: Scalar> DaRnnParams<T> {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        DaRnnParams {
            lstm_phi: LstmParams::zeros(cfg.phi_dim, cfg.h_phi, cfg.peephole_mode, cfg.gate_activation),
            lstm_gamma: LstmParams::zeros(cfg.gamma_dim, cfg.h_gamma, cfg.peephole_mode, cfg.gate_activation),
            gru_a: GruParams::zeros(cfg.h_phi + cfg.h_gamma, cfg.h_a, cfg.gru_reading),
            lstm_eta: LstmParams::zeros(cfg.eta_dim, cfg.h_eta, cfg.peephole_mode, cfg.gate_activation),
            fusion: DenseParams::zeros(cfg.h_a + cfg.h_eta, cfg.h_z),
            head: DenseParams::zeros(cfg.h_z, cfg.num_classes),
            domain_hidden: DenseParams::zeros(cfg.h_z, cfg.domain_hidden),
            domain_out: DenseParams::zeros(cfg.domain_hidden, 1),
        }
    }

    pub fn init(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Self {
        let (b, s) = (cfg.recurrent_bias_init, cfg.recurrent_bias_scope);
        DaRnnParams {
            lstm_phi: LstmParams::init(cfg.phi_dim, cfg.h_phi, cfg.peephole_mode, cfg.gate_activation, b, s, rng),
            lstm_gamma: LstmParams::init(cfg.gamma_dim, cfg.h_gamma, cfg.peephole_mode, cfg.gate_activation, b, s, rng),
            gru_a: GruParams::init(cfg.h_phi + cfg.h_gamma, cfg.h_a, cfg.gru_reading, b, s, rng),
            lstm_eta: LstmParams::init(cfg.eta_dim, cfg.h_eta, cfg.peephole_mode, cfg.gate_activation, b, s, rng),
            fusion: DenseParams::init(cfg.h_a + cfg.h_eta, cfg.h_z, rng),
            head: DenseParams::init(cfg.h_z, cfg.num_classes, rng),
            domain_hidden: DenseParams::init(cfg.h_z, cfg.domain_hidden, rng),
            domain_out: DenseParams::init(cfg.domain_hidden, 1, rng),
        }
    }

    /// Tensors grouped by layer, in checkpoint order.
    pub fn layers(&self) -> Vec<(&'static str, Vec<(&'static str, &Matrix<T>)>)> {
        vec![
            ("lstm_phi", self.lstm_phi.tensors()),
            ("lstm_gamma", self.lstm_gamma.tensors()),
            ("gru_a", self.gru_a.tensors()),
            ("lstm_eta", self.lstm_eta.tensors()),
            ("fusion", self.fusion.tensors()),
            ("head", self.head.tensors()),
            ("domain_hidden", self.domain_hidden.tensors()),
            ("domain_out", self.domain_out.tensors()),
        ]
    }

    pub fn layers_mut(&mut self) -> Vec<(&'static str, Vec<(&'static str, &mut Matrix<T>)>)> {
        vec![
            ("lstm_phi", self.lstm_phi.tensors_mut()),
            ("lstm_gamma", self.lstm_gamma.tensors_mut()),
            ("gru_a", self.gru_a.tensors_mut()),
            ("lstm_eta", self.lstm_eta.tensors_mut()),
            ("fusion", self.fusion.tensors_mut()),
            ("head", self.head.tensors_mut()),
            ("domain_hidden", self.domain_hidden.tensors_mut()),
            ("domain_out", self.domain_out.tensors_mut()),
        ]
    }

    /// `layer.tensor` names in the same order as [`ParamSet::tensors`].
    pub fn qualified_names(&self) -> Vec<String> {
        self.layers()
            .into_iter()
            .flat_map(|(layer, ts)| ts.into_iter().map(move |(n, _)| format!("{layer}.{n}")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm_phi.validate()?;
        self.lstm_gamma.validate()?;
        self.gru_a.validate()?;
        self.lstm_eta.validate()?;
        for d in [&self.fusion, &self.head, &self.domain_hidden, &self.domain_out] {
            d.validate()?;
        }
        Ok(())
    }
}

impl<T: Scalar> ParamSet<T> for DaRnnParams<T> {
    fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)> {
        self.layers().into_iter().flat_map(|(_, ts)| ts).collect()
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        self.layers_mut().into_iter().flat_map(|(_, ts)| ts).collect()
    }
}

/// The LSTM-GRU fusion network with manoeuvre and domain heads.
#[derive(Debug, Clone, PartialEq)]
pub struct DaRnnModel<T> {
    pub config: NetworkConfig,
    pub params: DaRnnParams<T>,
}

/// Dropout switch for a forward pass.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut ChaCha8Rng),
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    /// Manoeuvre probabilities at every timestep.
    pub probs: Vec<Vec<T>>,
    /// Sigmoid domain probabilities: one entry, or one per timestep.
    pub domain_probs: Vec<T>,
    /// Fusion vectors after output dropout, as seen by both heads.
    pub fusion: Vec<Vec<T>>,
    trace: Option<Trace<T>>,
}

#[derive(Debug, Clone)]
struct Trace<T> {
    phi: LstmTrace<T>,
    gamma: LstmTrace<T>,
    gru: GruTrace<T>,
    eta: LstmTrace<T>,
    /// Output-dropout masks per timestep for phi, gamma, a, eta, z.
    out_masks: Option<[Vec<Vec<T>>; 5]>,
    gru_inputs: Vec<Vec<T>>,
    fusion_inputs: Vec<Vec<T>>,
    /// `tanh` outputs of the fusion layer before dropout.
    fusion_raw: Vec<Vec<T>>,
    /// Domain head input per evaluated step and its hidden activations.
    domain_steps: Vec<usize>,
    domain_hidden: Vec<Vec<T>>,
}

fn with_masks<T: Scalar>(values: &[Vec<T>], masks: Option<&Vec<Vec<T>>>) -> Vec<Vec<T>> {
    match masks {
        Some(ms) => values
            .iter()
            .zip(ms)
            .map(|(v, m)| {
                let mut out = v.clone();
                apply_mask(&mut out, m);
                out
            })
            .collect(),
        None => values.to_vec(),
    }
}

fn concat<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

impl<T: Scalar> DaRnnModel<T> {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = DaRnnParams::init(&config, &mut rng);
        Ok(DaRnnModel { config, params })
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let params = DaRnnParams::zeros(&config);
        Ok(DaRnnModel { config, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Re-draws the domain classifier weights.
    pub fn reset_domain_head(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.params.domain_hidden = DenseParams::init(self.config.h_z, self.config.domain_hidden, &mut rng);
        self.params.domain_out = DenseParams::init(self.config.domain_hidden, 1, &mut rng);
    }

    pub fn check_input(&self, input: &SequenceInput<T>) -> Result<()> {
        let n = input.phi.len();
        if n == 0 {
            return Err(Error::Usage("empty sequence".into()));
        }
        if input.gamma.len() != n || input.eta.len() != n {
            return Err(Error::Schema(format!(
                "stream lengths differ: phi {n}, gamma {}, eta {}",
                input.gamma.len(),
                input.eta.len()
            )));
        }
        let c = &self.config;
        for t in 0..n {
            for (name, row, want) in [
                ("phi", &input.phi[t], c.phi_dim),
                ("gamma", &input.gamma[t], c.gamma_dim),
                ("eta", &input.eta[t], c.eta_dim),
            ] {
                if row.len() != want {
                    return Err(Error::Schema(format!(
                        "frame {t}: `{name}` has width {}, expected {want}",
                        row.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Extractor plus both heads. The domain head always runs; callers ignore
    /// its output when adaptation is off.
    pub fn forward(&self, input: &SequenceInput<T>, mode: Mode<'_>, record: bool) -> Result<ForwardPass<T>> {
        self.check_input(input)?;
        let c = &self.config;
        let p = &self.params;
        let len = input.len();

        let mut rng = match mode {
            Mode::Train(rng) if c.dropout_active() => Some(rng),
            _ => None,
        };

        let (m_phi, m_gamma, m_a, m_eta) = match rng.as_deref_mut() {
            Some(r) if c.recurrent_dropout > 0.0 => (
                Some(LstmMasks::sample(c.h_phi, c.recurrent_dropout, r)?),
                Some(LstmMasks::sample(c.h_gamma, c.recurrent_dropout, r)?),
                Some(GruMasks::sample(c.h_a, c.recurrent_dropout, r)?),
                Some(LstmMasks::sample(c.h_eta, c.recurrent_dropout, r)?),
            ),
            _ => (None, None, None, None),
        };
        let out_masks = match rng.as_deref_mut() {
            Some(r) if c.output_dropout > 0.0 => {
                let mut draw = |width: usize| -> Result<Vec<Vec<T>>> {
                    (0..len).map(|_| make_dropout_mask(width, c.output_dropout, r)).collect()
                };
                Some([draw(c.h_phi)?, draw(c.h_gamma)?, draw(c.h_a)?, draw(c.h_eta)?, draw(c.h_z)?])
            }
            _ => None,
        };
        let om = |k: usize| out_masks.as_ref().map(|m| &m[k]);

        let phi = lstm_forward_sequence(&p.lstm_phi, &input.phi, m_phi, record)?;
        let gamma = lstm_forward_sequence(&p.lstm_gamma, &input.gamma, m_gamma, record)?;
        let h_phi = with_masks(&phi.hidden, om(0));
        let h_gamma = with_masks(&gamma.hidden, om(1));
        let gru_inputs: Vec<Vec<T>> = h_phi.iter().zip(&h_gamma).map(|(a, b)| concat(a, b)).collect();
        let gru = gru_forward_sequence(&p.gru_a, &gru_inputs, m_a, record)?;
        let eta = lstm_forward_sequence(&p.lstm_eta, &input.eta, m_eta, record)?;
        let h_a = with_masks(&gru.hidden, om(2));
        let h_eta = with_masks(&eta.hidden, om(3));

        let fusion_inputs: Vec<Vec<T>> = h_a.iter().zip(&h_eta).map(|(a, b)| concat(a, b)).collect();
        let fusion_raw: Vec<Vec<T>> = fusion_inputs
            .iter()
            .map(|x| p.fusion.linear(x).into_iter().map(|v| v.tanh()).collect())
            .collect();
        let fusion = with_masks(&fusion_raw, om(4));

        let probs: Vec<Vec<T>> = fusion.iter().map(|z| softmax(&p.head.linear(z))).collect();

        let domain_steps: Vec<usize> = match c.domain_input {
            DomainInput::FinalStep => vec![len - 1],
            DomainInput::EveryStep => (0..len).collect(),
        };
        let mut domain_hidden = Vec::with_capacity(domain_steps.len());
        let mut domain_probs = Vec::with_capacity(domain_steps.len());
        for &t in &domain_steps {
            // The reversal layer is the identity on the forward pass.
            let hidden: Vec<T> = p.domain_hidden.linear(&fusion[t]).into_iter().map(|v| v.tanh()).collect();
            domain_probs.push(sigmoid(p.domain_out.linear(&hidden)[0]));
            domain_hidden.push(hidden);
        }

        let trace = record.then(|| Trace {
            phi,
            gamma,
            gru,
            eta,
            out_masks,
            gru_inputs,
            fusion_inputs,
            fusion_raw,
            domain_steps,
            domain_hidden,
        });
        Ok(ForwardPass { probs, domain_probs, fusion, trace })
    }

    /// Probabilities only, dropout off.
    pub fn predict(&self, input: &SequenceInput<T>) -> Result<Vec<Vec<T>>> {
        Ok(self.forward(input, Mode::Infer, false)?.probs)
    }

    /// Backward through a recorded pass.
    ///
    /// `dlogits` are manoeuvre-logit gradients per timestep (already scaled);
    /// `ddomain` are domain-logit gradients for each domain step, also scaled.
    /// The domain head receives `+∂L_d`; the extractor receives `-λ ∂L_d`.
    pub fn backward(
        &self,
        pass: &ForwardPass<T>,
        dlogits: Option<&[Vec<T>]>,
        ddomain: Option<&[T]>,
        lambda: T,
        grads: &mut DaRnnParams<T>,
    ) -> Result<()> {
        let tr = pass
            .trace
            .as_ref()
            .ok_or_else(|| Error::Usage("backward called on a pass recorded without gradients".into()))?;
        let c = &self.config;
        let p = &self.params;
        let len = pass.probs.len();
        let mut dz = vec![vec![T::zero(); c.h_z]; len];

        if let Some(dl) = dlogits {
            if dl.len() != len {
                return Err(Error::Shape(format!("{} logit gradients for {len} steps", dl.len())));
            }
            for t in 0..len {
                dz[t] = p.head.backward_linear(&pass.fusion[t], &dl[t], &mut grads.head);
            }
        }

        if let Some(dd) = ddomain {
            if dd.len() != tr.domain_steps.len() {
                return Err(Error::Shape(format!("{} domain gradients for {} steps", dd.len(), tr.domain_steps.len())));
            }
            let grl = GradientReversal::new(lambda);
            for (k, &t) in tr.domain_steps.iter().enumerate() {
                let hidden = &tr.domain_hidden[k];
                let dh = p.domain_out.backward_linear(hidden, &[dd[k]], &mut grads.domain_out);
                let da: Vec<T> = dh.iter().zip(hidden).map(|(&g, &v)| g * tanh_grad_from_output(v)).collect();
                let dfeat = p.domain_hidden.backward_linear(&pass.fusion[t], &da, &mut grads.domain_hidden);
                if lambda == T::zero() {
                    continue;
                }
                for (acc, g) in dz[t].iter_mut().zip(grl.backward(&dfeat)) {
                    *acc += g;
                }
            }
        }

        let om = |k: usize, t: usize| tr.out_masks.as_ref().map(|m| &m[k][t]);
        let (ha, heta) = (c.h_a, c.h_eta);
        let mut dh_a = vec![Vec::new(); len];
        let mut dh_eta = vec![Vec::new(); len];
        for t in 0..len {
            let mut g = dz[t].clone();
            if let Some(m) = om(4, t) {
                apply_mask(&mut g, m);
            }
            let da: Vec<T> = g.iter().zip(&tr.fusion_raw[t]).map(|(&d, &y)| d * tanh_grad_from_output(y)).collect();
            let mut dx = p.fusion.backward_linear(&tr.fusion_inputs[t], &da, &mut grads.fusion);
            let mut de = dx.split_off(ha);
            debug_assert_eq!(de.len(), heta);
            if let Some(m) = om(2, t) {
                apply_mask(&mut dx, m);
            }
            if let Some(m) = om(3, t) {
                apply_mask(&mut de, m);
            }
            dh_a[t] = dx;
            dh_eta[t] = de;
        }

        lstm_backward_sequence(&p.lstm_eta, &tr.eta, &dh_eta, &mut grads.lstm_eta)?;
        let dgru_in = gru_backward_sequence(&p.gru_a, &tr.gru, &dh_a, &mut grads.gru_a)?;
        debug_assert_eq!(tr.gru_inputs.len(), len);

        let mut dh_phi = Vec::with_capacity(len);
        let mut dh_gamma = Vec::with_capacity(len);
        for (t, mut d) in dgru_in.into_iter().enumerate() {
            let mut dg = d.split_off(c.h_phi);
            if let Some(m) = om(0, t) {
                apply_mask(&mut d, m);
            }
            if let Some(m) = om(1, t) {
                apply_mask(&mut dg, m);
            }
            dh_phi.push(d);
            dh_gamma.push(dg);
        }
        lstm_backward_sequence(&p.lstm_phi, &tr.phi, &dh_phi, &mut grads.lstm_phi)?;
        lstm_backward_sequence(&p.lstm_gamma, &tr.gamma, &dh_gamma, &mut grads.lstm_gamma)?;
        Ok(())
    }
}
