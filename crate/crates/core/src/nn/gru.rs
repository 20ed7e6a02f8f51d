//! Gated recurrent unit.
//!
//! ```text
//! r_t = σ(W_xr x_t + W_hr h_{t-1} + b_r)
//! z_t = σ(W_xz x_t + W_hz h_{t-1} + b_z)
//! ĥ_t = tanh(W_xh x_t + W_hh (r_t ⊙ h_{t-1}) + b_h)
//! h_t = z_t ⊙ h_{t-1} + (1 - z_t) ⊙ ĥ_t        (GruReading::Standard)
//! h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ ĥ_t        (GruReading::Swapped)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::{sigmoid, sigmoid_grad_from_output, tanh_grad_from_output};
use super::dropout::make_dropout_mask;
use super::init::{glorot_uniform, BiasScope};
use super::matrix::{expect_len, expect_shape, Matrix};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Role of the update gate in the state interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GruReading {
    /// `z` keeps the previous state.
    #[default]
    Standard,
    /// `z` admits the candidate.
    Swapped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_xr: Matrix<T>,
    pub w_hr: Matrix<T>,
    pub b_r: Matrix<T>,
    pub w_xz: Matrix<T>,
    pub w_hz: Matrix<T>,
    pub b_z: Matrix<T>,
    pub w_xh: Matrix<T>,
    pub w_hh: Matrix<T>,
    pub b_h: Matrix<T>,
    pub reading: GruReading,
}

impl<T: Scalar> GruParams<T> {
    pub fn zeros(input: usize, hidden: usize, reading: GruReading) -> Self {
        GruParams {
            w_xr: Matrix::zeros(hidden, input),
            w_hr: Matrix::zeros(hidden, hidden),
            b_r: Matrix::zeros(hidden, 1),
            w_xz: Matrix::zeros(hidden, input),
            w_hz: Matrix::zeros(hidden, hidden),
            b_z: Matrix::zeros(hidden, 1),
            w_xh: Matrix::zeros(hidden, input),
            w_hh: Matrix::zeros(hidden, hidden),
            b_h: Matrix::zeros(hidden, 1),
            reading,
        }
    }

    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        reading: GruReading,
        bias: f64,
        scope: BiasScope,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input, hidden, reading);
        for (name, t) in p.tensors_mut() {
            if name.starts_with("b_") {
                t.fill(T::of(scope.value(name, "b_z", bias)));
            } else {
                *t = glorot_uniform(t.rows(), t.cols(), rng);
            }
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_xr.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_xr.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, d) = (self.hidden_size(), self.input_size());
        for (name, t) in self.tensors() {
            let (r, c) = match name {
                "w_xr" | "w_xz" | "w_xh" => (h, d),
                "w_hr" | "w_hz" | "w_hh" => (h, h),
                _ => (h, 1),
            };
            expect_shape(name, t, r, c)?;
        }
        Ok(())
    }
}

impl<T: Scalar> ParamSet<T> for GruParams<T> {
    fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)> {
        vec![
            ("w_xr", &self.w_xr),
            ("w_hr", &self.w_hr),
            ("b_r", &self.b_r),
            ("w_xz", &self.w_xz),
            ("w_hz", &self.w_hz),
            ("b_z", &self.b_z),
            ("w_xh", &self.w_xh),
            ("w_hh", &self.w_hh),
            ("b_h", &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        vec![
            ("w_xr", &mut self.w_xr),
            ("w_hr", &mut self.w_hr),
            ("b_r", &mut self.b_r),
            ("w_xz", &mut self.w_xz),
            ("w_hz", &mut self.w_hz),
            ("b_z", &mut self.b_z),
            ("w_xh", &mut self.w_xh),
            ("w_hh", &mut self.w_hh),
            ("b_h", &mut self.b_h),
        ]
    }
}

/// Variational masks on `h_{t-1}` for the reset, update and candidate inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GruMasks<T> {
    pub gates: [Vec<T>; 3],
}

impl<T: Scalar> GruMasks<T> {
    pub fn sample<R: Rng + ?Sized>(hidden: usize, rate: f64, rng: &mut R) -> Result<Self> {
        Ok(GruMasks {
            gates: [
                make_dropout_mask(hidden, rate, rng)?,
                make_dropout_mask(hidden, rate, rng)?,
                make_dropout_mask(hidden, rate, rng)?,
            ],
        })
    }
}

#[derive(Debug, Clone)]
pub struct GruStepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    /// `h_{t-1}` after each gate's recurrent mask (r, z, candidate).
    h_in: [Vec<T>; 3],
    r: Vec<T>,
    z: Vec<T>,
    cand: Vec<T>,
}

fn masked<T: Scalar>(h: &[T], mask: Option<&Vec<T>>) -> Vec<T> {
    match mask {
        Some(m) => h.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => h.to_vec(),
    }
}

pub fn gru_step<T: Scalar>(
    p: &GruParams<T>,
    x: &[T],
    h_prev: &[T],
    masks: Option<&GruMasks<T>>,
) -> Result<(Vec<T>, GruStepCache<T>)> {
    p.validate()?;
    expect_len("x_t", x.len(), p.input_size())?;
    expect_len("h_prev", h_prev.len(), p.hidden_size())?;
    Ok(gru_step_unchecked(p, x, h_prev, masks))
}

pub(crate) fn gru_step_unchecked<T: Scalar>(
    p: &GruParams<T>,
    x: &[T],
    h_prev: &[T],
    masks: Option<&GruMasks<T>>,
) -> (Vec<T>, GruStepCache<T>) {
    let h_in = [
        masked(h_prev, masks.map(|m| &m.gates[0])),
        masked(h_prev, masks.map(|m| &m.gates[1])),
        masked(h_prev, masks.map(|m| &m.gates[2])),
    ];
    let mut a_r = p.w_xr.affine(x, &p.b_r);
    p.w_hr.gemv_acc(&h_in[0], &mut a_r);
    let mut a_z = p.w_xz.affine(x, &p.b_z);
    p.w_hz.gemv_acc(&h_in[1], &mut a_z);
    let r: Vec<T> = a_r.into_iter().map(sigmoid).collect();
    let z: Vec<T> = a_z.into_iter().map(sigmoid).collect();

    let rh: Vec<T> = r.iter().zip(&h_in[2]).map(|(&a, &b)| a * b).collect();
    let mut a_h = p.w_xh.affine(x, &p.b_h);
    p.w_hh.gemv_acc(&rh, &mut a_h);
    let cand: Vec<T> = a_h.into_iter().map(|v| v.tanh()).collect();

    let h: Vec<T> = (0..z.len())
        .map(|k| match p.reading {
            GruReading::Standard => z[k] * h_prev[k] + (T::one() - z[k]) * cand[k],
            GruReading::Swapped => (T::one() - z[k]) * h_prev[k] + z[k] * cand[k],
        })
        .collect();
    let cache = GruStepCache { x: x.to_vec(), h_prev: h_prev.to_vec(), h_in, r, z, cand };
    (h, cache)
}

/// Backward through one step. Returns `(dx_t, dh_prev)`.
pub fn gru_backward<T: Scalar>(
    p: &GruParams<T>,
    cache: &GruStepCache<T>,
    masks: Option<&GruMasks<T>>,
    dh: &[T],
    grads: &mut GruParams<T>,
) -> (Vec<T>, Vec<T>) {
    let n = dh.len();
    let mut dh_prev = vec![T::zero(); n];
    let mut da_z = vec![T::zero(); n];
    let mut da_h = vec![T::zero(); n];
    for k in 0..n {
        let (dz, dcand, carry) = match p.reading {
            GruReading::Standard => {
                (dh[k] * (cache.h_prev[k] - cache.cand[k]), dh[k] * (T::one() - cache.z[k]), dh[k] * cache.z[k])
            }
            GruReading::Swapped => {
                (dh[k] * (cache.cand[k] - cache.h_prev[k]), dh[k] * cache.z[k], dh[k] * (T::one() - cache.z[k]))
            }
        };
        dh_prev[k] = carry;
        da_z[k] = dz * sigmoid_grad_from_output(cache.z[k]);
        da_h[k] = dcand * tanh_grad_from_output(cache.cand[k]);
    }

    let rh: Vec<T> = cache.r.iter().zip(&cache.h_in[2]).map(|(&a, &b)| a * b).collect();
    grads.w_xh.rank1_acc(&da_h, &cache.x);
    grads.w_hh.rank1_acc(&da_h, &rh);
    grads.b_h.add_slice(&da_h);
    let mut d_rh = vec![T::zero(); n];
    p.w_hh.gemv_t_acc(&da_h, &mut d_rh);

    let mut da_r = vec![T::zero(); n];
    for k in 0..n {
        let dr = d_rh[k] * cache.h_in[2][k];
        da_r[k] = dr * sigmoid_grad_from_output(cache.r[k]);
        let through = d_rh[k] * cache.r[k];
        dh_prev[k] += match masks {
            Some(m) => through * m.gates[2][k],
            None => through,
        };
    }

    grads.w_xr.rank1_acc(&da_r, &cache.x);
    grads.w_hr.rank1_acc(&da_r, &cache.h_in[0]);
    grads.b_r.add_slice(&da_r);
    grads.w_xz.rank1_acc(&da_z, &cache.x);
    grads.w_hz.rank1_acc(&da_z, &cache.h_in[1]);
    grads.b_z.add_slice(&da_z);

    let mut dx = vec![T::zero(); cache.x.len()];
    p.w_xr.gemv_t_acc(&da_r, &mut dx);
    p.w_xz.gemv_t_acc(&da_z, &mut dx);
    p.w_xh.gemv_t_acc(&da_h, &mut dx);

    for (gate, (w, da)) in [(&p.w_hr, &da_r), (&p.w_hz, &da_z)].into_iter().enumerate() {
        match masks {
            Some(m) => {
                let mut tmp = vec![T::zero(); n];
                w.gemv_t_acc(da, &mut tmp);
                for ((d, t), &mv) in dh_prev.iter_mut().zip(tmp).zip(&m.gates[gate]) {
                    *d += t * mv;
                }
            }
            None => w.gemv_t_acc(da, &mut dh_prev),
        }
    }
    (dx, dh_prev)
}

#[derive(Debug, Clone)]
pub struct GruTrace<T> {
    pub hidden: Vec<Vec<T>>,
    steps: Option<Vec<GruStepCache<T>>>,
    masks: Option<GruMasks<T>>,
}

impl<T: Scalar> GruTrace<T> {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }
}

pub fn gru_forward_sequence<T: Scalar>(
    p: &GruParams<T>,
    inputs: &[Vec<T>],
    masks: Option<GruMasks<T>>,
    record: bool,
) -> Result<GruTrace<T>> {
    p.validate()?;
    let n = p.hidden_size();
    if let Some(m) = &masks {
        for g in &m.gates {
            expect_len("recurrent mask", g.len(), n)?;
        }
    }
    let mut h = vec![T::zero(); n];
    let mut hidden = Vec::with_capacity(inputs.len());
    let mut steps = record.then(|| Vec::with_capacity(inputs.len()));
    for (t, x) in inputs.iter().enumerate() {
        if x.len() != p.input_size() {
            return Err(Error::Shape(format!(
                "frame {t}: input has width {}, expected {}",
                x.len(),
                p.input_size()
            )));
        }
        let (h_next, cache) = gru_step_unchecked(p, x, &h, masks.as_ref());
        if let Some(s) = steps.as_mut() {
            s.push(cache);
        }
        hidden.push(h_next.clone());
        h = h_next;
    }
    Ok(GruTrace { hidden, steps, masks })
}

pub fn gru_backward_sequence<T: Scalar>(
    p: &GruParams<T>,
    trace: &GruTrace<T>,
    dhidden: &[Vec<T>],
    grads: &mut GruParams<T>,
) -> Result<Vec<Vec<T>>> {
    let steps = trace
        .steps
        .as_ref()
        .ok_or_else(|| Error::Usage("GRU backward called on a trace recorded without gradients".into()))?;
    expect_len("upstream gradients", dhidden.len(), steps.len())?;
    let mut dh_next = vec![T::zero(); p.hidden_size()];
    let mut dxs = vec![Vec::new(); steps.len()];
    for t in (0..steps.len()).rev() {
        let dh: Vec<T> = dhidden[t].iter().zip(&dh_next).map(|(&a, &b)| a + b).collect();
        let (dx, dh_prev) = gru_backward(p, &steps[t], trace.masks.as_ref(), &dh, grads);
        dxs[t] = dx;
        dh_next = dh_prev;
    }
    Ok(dxs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(d: usize, h: usize, reading: GruReading, seed: u64) -> GruParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = GruParams::zeros(d, h, reading);
        for (_, t) in p.tensors_mut() {
            *t = uniform(t.rows(), t.cols(), 0.8, &mut rng);
        }
        p
    }

    #[test]
    fn zero_params_zero_state() {
        let p = GruParams::<f64>::zeros(3, 4, GruReading::Standard);
        let (h, _) = gru_step(&p, &[0.5, -1.0, 2.0], &[0.0; 4], None).unwrap();
        assert_eq!(h, vec![0.0; 4]);
    }

    #[test]
    fn closed_update_gate_holds_state() {
        let mut p = random_params(3, 4, GruReading::Standard, 2);
        p.b_z.fill(60.0);
        let h_prev = [0.3, -0.2, 0.9, 0.0];
        for x in [[5.0, -3.0, 1.0], [-2.0, 0.0, 7.0]] {
            let (h, _) = gru_step(&p, &x, &h_prev, None).unwrap();
            for (a, b) in h.iter().zip(&h_prev) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_zero_grads_and_linearity() {
        let p = random_params(3, 4, GruReading::Swapped, 8);
        let (_, cache) = gru_step(&p, &[0.1, 0.4, -0.3], &[0.2, -0.1, 0.0, 0.5], None).unwrap();
        let mut g0 = p.zeros_like();
        let (dx, dh) = gru_backward(&p, &cache, None, &[0.0; 4], &mut g0);
        assert!(dx.iter().chain(&dh).all(|&v| v == 0.0));
        assert!(g0.tensors().iter().all(|(_, t)| t.max_abs() == 0.0));

        let up = [0.4, -0.7, 0.1, 0.25];
        let up2: Vec<f64> = up.iter().map(|v| 2.0 * v).collect();
        let mut g1 = p.zeros_like();
        let mut g2 = p.zeros_like();
        gru_backward(&p, &cache, None, &up, &mut g1);
        gru_backward(&p, &cache, None, &up2, &mut g2);
        for ((_, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn wrong_width_is_shape_error() {
        let p = GruParams::<f64>::zeros(3, 2, GruReading::Standard);
        assert!(matches!(gru_step(&p, &[0.0; 4], &[0.0; 2], None), Err(Error::Shape(_))));
    }
}
