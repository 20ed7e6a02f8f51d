use super::matrix::Matrix;
use crate::scalar::Scalar;

/// A fixed, ordered collection of named parameter tensors.
///
/// The same concrete type doubles as its own gradient container, so
/// accumulation, optimizer updates and checkpointing all walk tensors in a
/// single well-defined order.
pub trait ParamSet<T: Scalar> {
    fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)>;

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(T::zero());
        }
        out
    }

    fn accumulate(&mut self, other: &Self) {
        let src = other.tensors();
        for ((_, dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            dst.add_assign(s);
        }
    }

    fn scale_all(&mut self, s: T) {
        for (_, t) in self.tensors_mut() {
            t.scale(s);
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}
