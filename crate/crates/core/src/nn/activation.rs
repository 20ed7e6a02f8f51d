use crate::scalar::Scalar;

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    // Split on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Derivative of the sigmoid expressed through its output.
#[inline]
pub fn sigmoid_grad_from_output<T: Scalar>(y: T) -> T {
    y * (T::one() - y)
}

#[inline]
pub fn tanh_grad_from_output<T: Scalar>(y: T) -> T {
    T::one() - y * y
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = out.iter().copied().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
