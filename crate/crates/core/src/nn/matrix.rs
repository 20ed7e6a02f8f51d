use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Bias vectors and diagonal peepholes are stored as
/// single-column matrices so every parameter shares one tensor type.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn column(data: Vec<T>) -> Self {
        Matrix { rows: data.len(), cols: 1, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `y += self * x`
    #[inline]
    pub fn gemv_acc(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (yr, row) in y.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            let mut acc = T::zero();
            for (&w, &xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *yr += acc;
        }
    }

    /// `self * x + b`, with `b` a column of matching height.
    pub fn affine(&self, x: &[T], b: &Matrix<T>) -> Vec<T> {
        let mut y = b.data.clone();
        self.gemv_acc(x, &mut y);
        y
    }

    /// `x += selfᵀ * y`
    #[inline]
    pub fn gemv_t_acc(&self, y: &[T], x: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (&yr, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yr == T::zero() {
                continue;
            }
            for (xv, &w) in x.iter_mut().zip(row) {
                *xv += w * yr;
            }
        }
    }

    /// `self += a bᵀ`
    #[inline]
    pub fn rank1_acc(&mut self, a: &[T], b: &[T]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (&ar, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ar == T::zero() {
                continue;
            }
            for (w, &bv) in row.iter_mut().zip(b) {
                *w += ar * bv;
            }
        }
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Matrix<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Elementwise `self += v` for a column stored as a slice.
    #[inline]
    pub fn add_slice(&mut self, v: &[T]) {
        debug_assert_eq!(self.data.len(), v.len());
        for (a, &b) in self.data.iter_mut().zip(v) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn fill(&mut self, v: T) {
        for a in &mut self.data {
            *a = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Converts to another precision, rounding to nearest.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }
}

/// Checks that `m` is `rows x cols`, naming the offending tensor on failure.
pub(crate) fn expect_shape<T: Scalar>(name: &str, m: &Matrix<T>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Shape(format!(
            "`{name}` is {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

pub(crate) fn expect_len(name: &str, v: usize, expected: usize) -> Result<()> {
    if v != expected {
        return Err(Error::Shape(format!("`{name}` has length {v}, expected {expected}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemv_and_transpose_agree_with_hand_values() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut y = vec![0.5, 0.0];
        m.gemv_acc(&[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, vec![-1.5, -2.0]);
        let mut x = vec![0.0; 3];
        m.gemv_t_acc(&[1.0, 1.0], &mut x);
        assert_eq!(x, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn rank1_update() {
        let mut m = Matrix::<f64>::zeros(2, 2);
        m.rank1_acc(&[1.0, 2.0], &[3.0, -1.0]);
        assert_eq!(m.as_slice(), &[3.0, -1.0, 6.0, -2.0]);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Matrix::from_vec(2, 2, vec![1.0f64; 3]).is_err());
    }
}
