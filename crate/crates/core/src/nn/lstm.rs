//! Peephole LSTM cell.
//!
//! ```text
//! i_t = act(W_xi x_t + W_hi h_{t-1} + W_ci c_{t-1} + b_i)
//! f_t = σ(W_xf x_t + W_hf h_{t-1} + W_cf c_{t-1} + b_f)
//! o_t = act(W_xo x_t + W_ho h_{t-1} + W_co c_{t-1} + b_o)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! `act` is `tanh` under [`GateActivation::AsPrinted`] and `σ` under
//! [`GateActivation::Conventional`]. Every peephole term reads the previous
//! cell state, including the output gate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::{sigmoid, sigmoid_grad_from_output, tanh_grad_from_output};
use super::dropout::make_dropout_mask;
use super::init::{glorot_uniform, BiasScope};
use super::matrix::{expect_len, expect_shape, Matrix};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GateActivation {
    /// `tanh` on the input and output gates.
    #[default]
    AsPrinted,
    /// `σ` on all three gates.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PeepholeMode {
    /// `W_c*` are `H x H` matrices.
    #[default]
    FullMatrix,
    /// `W_c*` are length-`H` vectors applied elementwise.
    Diagonal,
}

impl GateActivation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            GateActivation::AsPrinted => x.tanh(),
            GateActivation::Conventional => sigmoid(x),
        }
    }

    #[inline]
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            GateActivation::AsPrinted => tanh_grad_from_output(y),
            GateActivation::Conventional => sigmoid_grad_from_output(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub w_xi: Matrix<T>,
    pub w_hi: Matrix<T>,
    pub w_ci: Matrix<T>,
    pub b_i: Matrix<T>,
    pub w_xf: Matrix<T>,
    pub w_hf: Matrix<T>,
    pub w_cf: Matrix<T>,
    pub b_f: Matrix<T>,
    pub w_xo: Matrix<T>,
    pub w_ho: Matrix<T>,
    pub w_co: Matrix<T>,
    pub b_o: Matrix<T>,
    pub w_xc: Matrix<T>,
    pub w_hc: Matrix<T>,
    pub b_c: Matrix<T>,
    pub peephole: PeepholeMode,
    pub gates: GateActivation,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(input: usize, hidden: usize, peephole: PeepholeMode, gates: GateActivation) -> Self {
        let peep = || match peephole {
            PeepholeMode::FullMatrix => Matrix::zeros(hidden, hidden),
            PeepholeMode::Diagonal => Matrix::zeros(hidden, 1),
        };
        LstmParams {
            w_xi: Matrix::zeros(hidden, input),
            w_hi: Matrix::zeros(hidden, hidden),
            w_ci: peep(),
            b_i: Matrix::zeros(hidden, 1),
            w_xf: Matrix::zeros(hidden, input),
            w_hf: Matrix::zeros(hidden, hidden),
            w_cf: peep(),
            b_f: Matrix::zeros(hidden, 1),
            w_xo: Matrix::zeros(hidden, input),
            w_ho: Matrix::zeros(hidden, hidden),
            w_co: peep(),
            b_o: Matrix::zeros(hidden, 1),
            w_xc: Matrix::zeros(hidden, input),
            w_hc: Matrix::zeros(hidden, hidden),
            b_c: Matrix::zeros(hidden, 1),
            peephole,
            gates,
        }
    }

    /// Glorot-uniform weights; biases in `scope` set to `bias`.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        peephole: PeepholeMode,
        gates: GateActivation,
        bias: f64,
        scope: BiasScope,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input, hidden, peephole, gates);
        for (name, t) in p.tensors_mut() {
            if name.starts_with("b_") {
                t.fill(T::of(scope.value(name, "b_f", bias)));
            } else {
                *t = glorot_uniform(t.rows(), t.cols(), rng);
            }
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_xi.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_xi.rows()
    }

    /// Validates every tensor against the input/hidden sizes implied by `w_xi`.
    pub fn validate(&self) -> Result<()> {
        let (h, d) = (self.hidden_size(), self.input_size());
        let peep_cols = match self.peephole {
            PeepholeMode::FullMatrix => h,
            PeepholeMode::Diagonal => 1,
        };
        for (name, t) in self.tensors() {
            let (r, c) = match name {
                "w_xi" | "w_xf" | "w_xo" | "w_xc" => (h, d),
                "w_hi" | "w_hf" | "w_ho" | "w_hc" => (h, h),
                "w_ci" | "w_cf" | "w_co" => (h, peep_cols),
                _ => (h, 1),
            };
            expect_shape(name, t, r, c)?;
        }
        Ok(())
    }

    #[inline]
    fn peep_acc(&self, w: &Matrix<T>, c: &[T], out: &mut [T]) {
        match self.peephole {
            PeepholeMode::FullMatrix => w.gemv_acc(c, out),
            PeepholeMode::Diagonal => {
                for ((o, &wv), &cv) in out.iter_mut().zip(w.as_slice()).zip(c) {
                    *o += wv * cv;
                }
            }
        }
    }

    #[inline]
    fn peep_t_acc(&self, w: &Matrix<T>, da: &[T], dc: &mut [T]) {
        match self.peephole {
            PeepholeMode::FullMatrix => w.gemv_t_acc(da, dc),
            PeepholeMode::Diagonal => {
                for ((d, &wv), &g) in dc.iter_mut().zip(w.as_slice()).zip(da) {
                    *d += wv * g;
                }
            }
        }
    }

    #[inline]
    fn peep_grad_acc(&self, gw: &mut Matrix<T>, da: &[T], c: &[T]) {
        match self.peephole {
            PeepholeMode::FullMatrix => gw.rank1_acc(da, c),
            PeepholeMode::Diagonal => {
                for ((g, &d), &cv) in gw.as_mut_slice().iter_mut().zip(da).zip(c) {
                    *g += d * cv;
                }
            }
        }
    }
}

impl<T: Scalar> ParamSet<T> for LstmParams<T> {
    fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)> {
        vec![
            ("w_xi", &self.w_xi),
            ("w_hi", &self.w_hi),
            ("w_ci", &self.w_ci),
            ("b_i", &self.b_i),
            ("w_xf", &self.w_xf),
            ("w_hf", &self.w_hf),
            ("w_cf", &self.w_cf),
            ("b_f", &self.b_f),
            ("w_xo", &self.w_xo),
            ("w_ho", &self.w_ho),
            ("w_co", &self.w_co),
            ("b_o", &self.b_o),
            ("w_xc", &self.w_xc),
            ("w_hc", &self.w_hc),
            ("b_c", &self.b_c),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        vec![
            ("w_xi", &mut self.w_xi),
            ("w_hi", &mut self.w_hi),
            ("w_ci", &mut self.w_ci),
            ("b_i", &mut self.b_i),
            ("w_xf", &mut self.w_xf),
            ("w_hf", &mut self.w_hf),
            ("w_cf", &mut self.w_cf),
            ("b_f", &mut self.b_f),
            ("w_xo", &mut self.w_xo),
            ("w_ho", &mut self.w_ho),
            ("w_co", &mut self.w_co),
            ("b_o", &mut self.b_o),
            ("w_xc", &mut self.w_xc),
            ("w_hc", &mut self.w_hc),
            ("b_c", &mut self.b_c),
        ]
    }
}

/// Variational masks on `h_{t-1}`, one per gate input (i, f, o, c).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmMasks<T> {
    pub gates: [Vec<T>; 4],
}

impl<T: Scalar> LstmMasks<T> {
    pub fn sample<R: Rng + ?Sized>(hidden: usize, rate: f64, rng: &mut R) -> Result<Self> {
        Ok(LstmMasks {
            gates: [
                make_dropout_mask(hidden, rate, rng)?,
                make_dropout_mask(hidden, rate, rng)?,
                make_dropout_mask(hidden, rate, rng)?,
                make_dropout_mask(hidden, rate, rng)?,
            ],
        })
    }
}

/// Everything one step needs for its exact backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCache<T> {
    x: Vec<T>,
    /// `h_{t-1}` as seen by each gate (after its recurrent mask).
    h_in: [Vec<T>; 4],
    c_prev: Vec<T>,
    i: Vec<T>,
    f: Vec<T>,
    o: Vec<T>,
    g: Vec<T>,
    tanh_c: Vec<T>,
}

fn masked<T: Scalar>(h: &[T], mask: Option<&Vec<T>>) -> Vec<T> {
    match mask {
        Some(m) => h.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => h.to_vec(),
    }
}

/// One forward step. Returns `(h_t, c_t, cache)`.
pub fn lstm_step<T: Scalar>(
    p: &LstmParams<T>,
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    masks: Option<&LstmMasks<T>>,
) -> Result<(Vec<T>, Vec<T>, LstmStepCache<T>)> {
    p.validate()?;
    expect_len("x_t", x.len(), p.input_size())?;
    expect_len("h_prev", h_prev.len(), p.hidden_size())?;
    expect_len("c_prev", c_prev.len(), p.hidden_size())?;
    Ok(lstm_step_unchecked(p, x, h_prev, c_prev, masks))
}

pub(crate) fn lstm_step_unchecked<T: Scalar>(
    p: &LstmParams<T>,
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    masks: Option<&LstmMasks<T>>,
) -> (Vec<T>, Vec<T>, LstmStepCache<T>) {
    let h_in = [
        masked(h_prev, masks.map(|m| &m.gates[0])),
        masked(h_prev, masks.map(|m| &m.gates[1])),
        masked(h_prev, masks.map(|m| &m.gates[2])),
        masked(h_prev, masks.map(|m| &m.gates[3])),
    ];

    let mut a_i = p.w_xi.affine(x, &p.b_i);
    p.w_hi.gemv_acc(&h_in[0], &mut a_i);
    p.peep_acc(&p.w_ci, c_prev, &mut a_i);

    let mut a_f = p.w_xf.affine(x, &p.b_f);
    p.w_hf.gemv_acc(&h_in[1], &mut a_f);
    p.peep_acc(&p.w_cf, c_prev, &mut a_f);

    let mut a_o = p.w_xo.affine(x, &p.b_o);
    p.w_ho.gemv_acc(&h_in[2], &mut a_o);
    p.peep_acc(&p.w_co, c_prev, &mut a_o);

    let mut a_g = p.w_xc.affine(x, &p.b_c);
    p.w_hc.gemv_acc(&h_in[3], &mut a_g);

    let i: Vec<T> = a_i.into_iter().map(|v| p.gates.apply(v)).collect();
    let f: Vec<T> = a_f.into_iter().map(sigmoid).collect();
    let o: Vec<T> = a_o.into_iter().map(|v| p.gates.apply(v)).collect();
    let g: Vec<T> = a_g.into_iter().map(|v| v.tanh()).collect();

    let c: Vec<T> = (0..f.len()).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<T> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<T> = o.iter().zip(&tanh_c).map(|(&a, &b)| a * b).collect();

    let cache = LstmStepCache { x: x.to_vec(), h_in, c_prev: c_prev.to_vec(), i, f, o, g, tanh_c };
    (h, c, cache)
}

/// Backward through one step, accumulating parameter gradients into `grads`.
///
/// `dh` and `dc` are the total upstream gradients on `h_t` and `c_t`.
/// Returns `(dx_t, dh_prev, dc_prev)`.
pub fn lstm_backward<T: Scalar>(
    p: &LstmParams<T>,
    cache: &LstmStepCache<T>,
    masks: Option<&LstmMasks<T>>,
    dh: &[T],
    dc: &[T],
    grads: &mut LstmParams<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = dh.len();
    let mut da_i = vec![T::zero(); n];
    let mut da_f = vec![T::zero(); n];
    let mut da_o = vec![T::zero(); n];
    let mut da_g = vec![T::zero(); n];
    let mut dc_prev = vec![T::zero(); n];
    for k in 0..n {
        let tc = cache.tanh_c[k];
        let d_o = dh[k] * tc;
        let dct = dc[k] + dh[k] * cache.o[k] * tanh_grad_from_output(tc);
        let d_i = dct * cache.g[k];
        let d_g = dct * cache.i[k];
        let d_f = dct * cache.c_prev[k];
        dc_prev[k] = dct * cache.f[k];
        da_i[k] = d_i * p.gates.grad_from_output(cache.i[k]);
        da_f[k] = d_f * sigmoid_grad_from_output(cache.f[k]);
        da_o[k] = d_o * p.gates.grad_from_output(cache.o[k]);
        da_g[k] = d_g * tanh_grad_from_output(cache.g[k]);
    }

    grads.w_xi.rank1_acc(&da_i, &cache.x);
    grads.w_xf.rank1_acc(&da_f, &cache.x);
    grads.w_xo.rank1_acc(&da_o, &cache.x);
    grads.w_xc.rank1_acc(&da_g, &cache.x);
    grads.w_hi.rank1_acc(&da_i, &cache.h_in[0]);
    grads.w_hf.rank1_acc(&da_f, &cache.h_in[1]);
    grads.w_ho.rank1_acc(&da_o, &cache.h_in[2]);
    grads.w_hc.rank1_acc(&da_g, &cache.h_in[3]);
    p.peep_grad_acc(&mut grads.w_ci, &da_i, &cache.c_prev);
    p.peep_grad_acc(&mut grads.w_cf, &da_f, &cache.c_prev);
    p.peep_grad_acc(&mut grads.w_co, &da_o, &cache.c_prev);
    grads.b_i.add_slice(&da_i);
    grads.b_f.add_slice(&da_f);
    grads.b_o.add_slice(&da_o);
    grads.b_c.add_slice(&da_g);

    let mut dx = vec![T::zero(); cache.x.len()];
    p.w_xi.gemv_t_acc(&da_i, &mut dx);
    p.w_xf.gemv_t_acc(&da_f, &mut dx);
    p.w_xo.gemv_t_acc(&da_o, &mut dx);
    p.w_xc.gemv_t_acc(&da_g, &mut dx);

    let mut dh_prev = vec![T::zero(); n];
    for (gate, (w, da)) in [(&p.w_hi, &da_i), (&p.w_hf, &da_f), (&p.w_ho, &da_o), (&p.w_hc, &da_g)]
        .into_iter()
        .enumerate()
    {
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

    p.peep_t_acc(&p.w_ci, &da_i, &mut dc_prev);
    p.peep_t_acc(&p.w_cf, &da_f, &mut dc_prev);
    p.peep_t_acc(&p.w_co, &da_o, &mut dc_prev);

    (dx, dh_prev, dc_prev)
}

/// Forward trace of a whole sequence from zero initial state.
#[derive(Debug, Clone)]
pub struct LstmTrace<T> {
    pub hidden: Vec<Vec<T>>,
    pub cells: Vec<Vec<T>>,
    steps: Option<Vec<LstmStepCache<T>>>,
    masks: Option<LstmMasks<T>>,
}

impl<T: Scalar> LstmTrace<T> {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    pub fn masks(&self) -> Option<&LstmMasks<T>> {
        self.masks.as_ref()
    }
}

/// Runs the cell over `inputs`. Step caches are kept only when `record` is set.
pub fn lstm_forward_sequence<T: Scalar>(
    p: &LstmParams<T>,
    inputs: &[Vec<T>],
    masks: Option<LstmMasks<T>>,
    record: bool,
) -> Result<LstmTrace<T>> {
    p.validate()?;
    let h_size = p.hidden_size();
    if let Some(m) = &masks {
        for g in &m.gates {
            expect_len("recurrent mask", g.len(), h_size)?;
        }
    }
    let mut h = vec![T::zero(); h_size];
    let mut c = vec![T::zero(); h_size];
    let mut hidden = Vec::with_capacity(inputs.len());
    let mut cells = Vec::with_capacity(inputs.len());
    let mut steps = record.then(|| Vec::with_capacity(inputs.len()));
    for (t, x) in inputs.iter().enumerate() {
        if x.len() != p.input_size() {
            return Err(Error::Shape(format!(
                "frame {t}: input has width {}, expected {}",
                x.len(),
                p.input_size()
            )));
        }
        let (h_next, c_next, cache) = lstm_step_unchecked(p, x, &h, &c, masks.as_ref());
        if let Some(s) = steps.as_mut() {
            s.push(cache);
        }
        hidden.push(h_next.clone());
        cells.push(c_next.clone());
        h = h_next;
        c = c_next;
    }
    Ok(LstmTrace { hidden, cells, steps, masks })
}

/// BPTT over a recorded trace. `dhidden[t]` is the loss gradient on `h_t`.
/// Returns per-step input gradients; parameter gradients are accumulated.
pub fn lstm_backward_sequence<T: Scalar>(
    p: &LstmParams<T>,
    trace: &LstmTrace<T>,
    dhidden: &[Vec<T>],
    grads: &mut LstmParams<T>,
) -> Result<Vec<Vec<T>>> {
    let steps = trace
        .steps
        .as_ref()
        .ok_or_else(|| Error::Usage("LSTM backward called on a trace recorded without gradients".into()))?;
    expect_len("upstream gradients", dhidden.len(), steps.len())?;
    let n = p.hidden_size();
    let mut dh_next = vec![T::zero(); n];
    let mut dc_next = vec![T::zero(); n];
    let mut dxs = vec![Vec::new(); steps.len()];
    for t in (0..steps.len()).rev() {
        let dh: Vec<T> = dhidden[t].iter().zip(&dh_next).map(|(&a, &b)| a + b).collect();
        let (dx, dh_prev, dc_prev) = lstm_backward(p, &steps[t], trace.masks.as_ref(), &dh, &dc_next, grads);
        dxs[t] = dx;
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    Ok(dxs)
}
