use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Inverted-dropout mask: entries are 0 (dropped) or 1/(1-rate) (kept).
///
/// A rate of zero returns an all-ones mask without touching the RNG.
pub fn make_dropout_mask<T: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<T>> {
    validate_rate(rate)?;
    if rate == 0.0 {
        return Ok(vec![T::one(); len]);
    }
    let keep = 1.0 - rate;
    let kept = T::of(1.0 / keep);
    Ok((0..len).map(|_| if rng.gen::<f64>() < keep { kept } else { T::zero() }).collect())
}

pub fn validate_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

#[inline]
pub fn apply_mask<T: Scalar>(values: &mut [T], mask: &[T]) {
    for (v, &m) in values.iter_mut().zip(mask) {
        *v *= m;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m: Vec<f64> = make_dropout_mask(100, 0.0, &mut rng).unwrap();
        assert!(m.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn kept_fraction_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m: Vec<f64> = make_dropout_mask(1_000_000, 0.6, &mut rng).unwrap();
        let kept: Vec<&f64> = m.iter().filter(|&&v| v != 0.0).collect();
        let frac = kept.len() as f64 / m.len() as f64;
        assert!((frac - 0.4).abs() < 0.002, "kept fraction {frac}");
        assert!(kept.iter().all(|&&v| v == 2.5));
    }

    #[test]
    fn same_seed_same_mask() {
        let a: Vec<f64> = make_dropout_mask(257, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b: Vec<f64> = make_dropout_mask(257, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let bytes = |v: &[f64]| v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
        assert_eq!(bytes(&a), bytes(&b));
    }

    #[test]
    fn invalid_rates_are_config_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for rate in [1.0, -0.1, 1.5, f64::NAN] {
            let err = make_dropout_mask::<f64, _>(4, rate, &mut rng).unwrap_err();
            assert!(matches!(err, Error::Config(_)));
        }
    }
}
