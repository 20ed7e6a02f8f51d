//! Causal Butterworth low-pass filter designed by the bilinear transform
//! with frequency prewarping, realized as cascaded biquads.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    s1: f64,
    s2: f64,
}

impl Biquad {
    fn new(b0: f64, b1: f64, b2: f64, a1: f64, a2: f64) -> Self {
        Biquad { b0, b1, b2, a1, a2, s1: 0.0, s2: 0.0 }
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.s1;
        self.s1 = self.b1 * x - self.a1 * y + self.s2;
        self.s2 = self.b2 * x - self.a2 * y;
        y
    }

    /// State for a constant input `x` held forever (unity DC gain).
    fn prime(&mut self, x: f64) {
        self.s2 = (self.b2 - self.a2) * x;
        self.s1 = (self.b1 - self.a1) * x + self.s2;
    }

    fn response(&self, w: f64) -> (f64, f64) {
        // H(e^{jw}) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let nr = self.b0 + self.b1 * c1 + self.b2 * c2;
        let ni = self.b1 * s1 + self.b2 * s2;
        let dr = 1.0 + self.a1 * c1 + self.a2 * c2;
        let di = self.a1 * s1 + self.a2 * s2;
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthLowpass {
    sections: Vec<Biquad>,
    sample_rate: f64,
}

impl ButterworthLowpass {
    /// `order` poles, cutoff `cutoff_hz` (-3 dB), sampling rate `sample_rate_hz`.
    pub fn new(order: usize, sample_rate_hz: f64, cutoff_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("filter order must be positive".into()));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
                sample_rate_hz / 2.0
            )));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for j in 0..order / 2 {
            // Pole pair damping: sin((2j+1)π / 2n).
            let zeta = ((2 * j + 1) as f64 * PI / (2 * order) as f64).sin();
            let q_inv = 2.0 * zeta;
            let norm = 1.0 / (1.0 + k * q_inv + k2);
            let b0 = k2 * norm;
            sections.push(Biquad::new(b0, 2.0 * b0, b0, 2.0 * (k2 - 1.0) * norm, (1.0 - k * q_inv + k2) * norm));
        }
        if order % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            sections.push(Biquad::new(k * norm, k * norm, 0.0, (k - 1.0) * norm, 0.0));
        }
        Ok(ButterworthLowpass { sections, sample_rate: sample_rate_hz })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |v, s| s.process(v))
    }

    /// Sets the internal state as if `x` had been the input forever.
    pub fn prime(&mut self, x: f64) {
        for s in &mut self.sections {
            s.prime(x);
        }
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.s1 = 0.0;
            s.s2 = 0.0;
        }
    }

    /// `|H|` at `freq_hz`, evaluated from the coefficients.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate;
        self.sections
            .iter()
            .map(|s| {
                let (re, im) = s.response(w);
                (re * re + im * im).sqrt()
            })
            .product()
    }
}
