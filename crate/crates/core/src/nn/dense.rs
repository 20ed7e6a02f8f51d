use rand::Rng;

use super::activation::{softmax, tanh_grad_from_output};
use super::init::glorot_uniform;
use super::matrix::{expect_len, expect_shape, Matrix};
use super::params::ParamSet;
use crate::error::Result;
use crate::scalar::Scalar;

/// Fully connected layer `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseParams { w: Matrix::zeros(output, input), b: Matrix::zeros(output, 1) }
    }

    /// Glorot weights, zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        DenseParams { w: glorot_uniform(output, input, rng), b: Matrix::zeros(output, 1) }
    }

    pub fn input_size(&self) -> usize {
        self.w.cols()
    }

    pub fn output_size(&self) -> usize {
        self.w.rows()
    }

    pub fn validate(&self) -> Result<()> {
        expect_shape("b", &self.b, self.w.rows(), 1)
    }

    #[inline]
    pub fn linear(&self, x: &[T]) -> Vec<T> {
        self.w.affine(x, &self.b)
    }

    /// Accumulates gradients for upstream `dy` on the pre-activation output and
    /// returns the gradient on the input.
    pub fn backward_linear(&self, x: &[T], dy: &[T], grads: &mut DenseParams<T>) -> Vec<T> {
        grads.w.rank1_acc(dy, x);
        grads.b.add_slice(dy);
        let mut dx = vec![T::zero(); x.len()];
        self.w.gemv_t_acc(dy, &mut dx);
        dx
    }
}

impl<T: Scalar> ParamSet<T> for DenseParams<T> {
    fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)> {
        vec![("w", &self.w), ("b", &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        vec![("w", &mut self.w), ("b", &mut self.b)]
    }
}

/// `tanh(W x + b)`
pub fn dense_tanh<T: Scalar>(p: &DenseParams<T>, x: &[T]) -> Result<Vec<T>> {
    p.validate()?;
    expect_len("input", x.len(), p.input_size())?;
    Ok(p.linear(x).into_iter().map(|v| v.tanh()).collect())
}

/// Backward of [`dense_tanh`] given its output `y`. Returns `dx`.
pub fn dense_tanh_backward<T: Scalar>(p: &DenseParams<T>, x: &[T], y: &[T], dy: &[T], grads: &mut DenseParams<T>) -> Vec<T> {
    let da: Vec<T> = dy.iter().zip(y).map(|(&d, &v)| d * tanh_grad_from_output(v)).collect();
    p.backward_linear(x, &da, grads)
}

/// `softmax(W x + b)`; returns `(probabilities, logits)`.
pub fn dense_softmax<T: Scalar>(p: &DenseParams<T>, x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    p.validate()?;
    expect_len("input", x.len(), p.input_size())?;
    let logits = p.linear(x);
    Ok((softmax(&logits), logits))
}

/// Backward of [`dense_softmax`] given the gradient on the logits.
pub fn dense_softmax_backward<T: Scalar>(p: &DenseParams<T>, x: &[T], dlogits: &[T], grads: &mut DenseParams<T>) -> Vec<T> {
    p.backward_linear(x, dlogits, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_tanh() {
        let p = DenseParams { w: Matrix::<f64>::identity(1), b: Matrix::zeros(1, 1) };
        let y = dense_tanh(&p, &[0.5]).unwrap();
        assert!((y[0] - 0.5f64.tanh()).abs() < 1e-15);
        assert!((y[0] - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn zero_softmax_head_is_uniform() {
        let p = DenseParams::<f64>::zeros(4, 5);
        let (probs, _) = dense_softmax(&p, &[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert!(probs.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn mismatched_input_rejected() {
        let p = DenseParams::<f64>::zeros(4, 5);
        assert!(dense_tanh(&p, &[1.0]).is_err());
    }
}
