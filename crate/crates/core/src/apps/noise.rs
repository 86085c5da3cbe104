use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{norm2, Scalar};

/// `p0 + tau * r * ||p0|| / ||r||` with `r` standard Gaussian, so that
/// `||p - p0|| = tau * ||p0||`.
pub fn add_noise<T: Scalar, R: Rng + ?Sized>(p0: &[T], tau: f64, rng: &mut R) -> Result<Vec<T>> {
    let scale = norm2(p0);
    if scale == 0.0 {
        return Err(Error::InvalidInput(
            "cannot add relative noise to a zero vector".into(),
        ));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise level must be nonnegative, got {tau}"
        )));
    }
    let r: Vec<T> = (0..p0.len()).map(|_| T::gaussian(rng)).collect();
    let rn = norm2(&r);
    if tau == 0.0 || rn == 0.0 {
        return Ok(p0.to_vec());
    }
    let factor = tau * scale / rn;
    Ok(p0
        .iter()
        .zip(&r)
        .map(|(a, b)| *a + b.scale(factor))
        .collect())
}
