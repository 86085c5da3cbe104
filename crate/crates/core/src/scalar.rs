//! Scalar field abstraction over `f64` and `Complex64`.

use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A real or complex scalar the solver can work over.
///
/// Inner products used for descent are always the real part of the
/// conjugate-linear product, so every real-case identity carries over.
pub trait Scalar:
    ComplexField<RealField = f64> + Copy + Serialize + DeserializeOwned + Send + Sync + 'static
{
    const IS_COMPLEX: bool;

    /// Standard normal sample; complex scalars draw independent real and
    /// imaginary parts.
    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Unit-modulus factor `s` with `s * |x| = x` (1 for zero).
    fn phase(self) -> Self {
        let m = self.modulus();
        if m == 0.0 {
            Self::one()
        } else {
            self.unscale(m)
        }
    }

    fn is_finite_value(self) -> bool {
        self.real().is_finite() && self.imaginary().is_finite()
    }
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    }
}

/// `Re(Σ conj(a_i) b_i)`.
pub fn real_inner<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.conjugate() * *y).real())
        .sum()
}

pub fn norm2<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| x.modulus_squared()).sum::<f64>().sqrt()
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite_value())
}
