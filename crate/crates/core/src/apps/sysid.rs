//! Identification of scalar linear time-invariant models
//! `R_0 p(t) + R_1 p(t+1) + ... + R_m p(t+m) = 0`.
//!
//! A trajectory of an order-`m` model makes `H_{m+1}(p)` rank deficient
//! with `R` in its left kernel, so fitting a model to noisy data is a Hankel
//! low-rank approximation with `m + 1` rows.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm2, Scalar};
use crate::solver::{solve, Solution, SolveParams};

/// Characteristic roots are drawn with modulus in this annulus.
pub const ROOT_RADIUS_RANGE: (f64, f64) = (0.5, 0.95);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiModel {
    /// `R_0, ..., R_m`, unit norm, last nonzero coefficient positive.
    coefficients: Vec<f64>,
}

impl LtiModel {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::InvalidModel("need at least R_0 and R_1".into()));
        }
        if !coefficients.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidModel("coefficients must be finite".into()));
        }
        let n = norm2(&coefficients);
        if n == 0.0 {
            return Err(Error::InvalidModel("coefficient vector is zero".into()));
        }
        let last = coefficients
            .iter()
            .rev()
            .find(|c| **c != 0.0)
            .copied()
            .unwrap_or(1.0);
        let s = last.signum() / n;
        Ok(Self {
            coefficients: coefficients.into_iter().map(|c| c * s).collect(),
        })
    }

    /// Model whose characteristic polynomial `R_0 + R_1 z + ... + R_m z^m`
    /// has the given roots. Complex roots must come in conjugate pairs.
    pub fn from_roots(roots: &[Complex64]) -> Result<Self> {
        if roots.is_empty() {
            return Err(Error::InvalidModel("order must be at least 1".into()));
        }
        let mut poly = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
            for (k, c) in poly.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * r;
            }
            poly = next;
        }
        let scale = poly.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if poly.iter().any(|c| c.im.abs() > 1e-10 * scale) {
            return Err(Error::InvalidModel(
                "roots are not closed under conjugation".into(),
            ));
        }
        Self::new(poly.into_iter().map(|c| c.re).collect())
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Angle between the coefficient vectors, in `[0, pi/2]`; sign-blind.
    pub fn angle_to(&self, other: &LtiModel) -> f64 {
        if self.order() != other.order() {
            return PI / 2.0;
        }
        let c: f64 = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a * b)
            .sum();
        let s = if c < 0.0 { -1.0 } else { 1.0 };
        let chord: f64 = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| (a - s * b).powi(2))
            .sum::<f64>()
            .sqrt();
        2.0 * (chord / 2.0).min(1.0).asin()
    }
}

/// Run the recursion forward from `initial` (length `m`) to length `len`.
pub fn simulate_lti(coefficients: &[f64], initial: &[f64], len: usize) -> Result<Vec<f64>> {
    let m = coefficients.len().saturating_sub(1);
    if m == 0 {
        return Err(Error::InvalidModel("order must be at least 1".into()));
    }
    let lead = coefficients[m];
    if lead == 0.0 {
        return Err(Error::InvalidModel(
            "R_m is zero; model is not in companion form".into(),
        ));
    }
    if initial.len() != m {
        return Err(Error::InvalidInput(format!(
            "order {m} model needs {m} initial values, got {}",
            initial.len()
        )));
    }
    if len <= m {
        return Err(Error::InvalidInput(format!(
            "trajectory length {len} must exceed the order {m}"
        )));
    }
    let mut p = initial.to_vec();
    for t in 0..len - m {
        let s: f64 = coefficients[..m]
            .iter()
            .zip(&p[t..t + m])
            .map(|(r, x)| r * x)
            .sum();
        p.push(-s / lead);
    }
    Ok(p)
}

/// Random model with characteristic roots in [`ROOT_RADIUS_RANGE`]:
/// conjugate pairs with angle uniform in `(0, pi)`, plus one real root of
/// random sign when the order is odd.
pub fn random_stable_model<R: Rng + ?Sized>(order: usize, rng: &mut R) -> Result<LtiModel> {
    if order == 0 {
        return Err(Error::InvalidModel("order must be at least 1".into()));
    }
    let (lo, hi) = ROOT_RADIUS_RANGE;
    let mut roots = Vec::with_capacity(order);
    for _ in 0..order / 2 {
        let r = rng.random_range(lo..hi);
        let theta = rng.random_range(0.0..PI);
        let z = Complex64::from_polar(r, theta);
        roots.push(z);
        roots.push(z.conj());
    }
    if order % 2 == 1 {
        let r = rng.random_range(lo..hi);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        roots.push(Complex64::new(sign * r, 0.0));
    }
    LtiModel::from_roots(&roots)
}

/// Trajectory of `model` from a standard normal initial condition.
pub fn random_trajectory<R: Rng + ?Sized>(
    model: &LtiModel,
    len: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let initial: Vec<f64> = (0..model.order()).map(|_| f64::gaussian(rng)).collect();
    simulate_lti(model.coefficients(), &initial, len)
}

/// Model read off the left kernel of `H_{m+1}(p~)`.
pub fn model_from_solution(solution: &Solution<f64>) -> Result<LtiModel> {
    LtiModel::new(solution.kernel_left.clone())
}

/// Fit an order-`order` model to `p`. Fails if the solver does not reach
/// the rank tolerance.
pub fn identify(
    p: &[f64],
    order: usize,
    params: &SolveParams,
) -> Result<(LtiModel, Solution<f64>)> {
    if order == 0 {
        return Err(Error::InvalidModel("order must be at least 1".into()));
    }
    if p.len() < 2 * (order + 1) {
        return Err(Error::InvalidInput(format!(
            "order {order} needs at least {} samples, got {}",
            2 * (order + 1),
            p.len()
        )));
    }
    let solution = solve(p, order + 1, params)?;
    if !solution.converged {
        return Err(Error::NotConverged {
            sigma: solution.sigma_final,
            tol: solution.tol_rank,
        });
    }
    Ok((model_from_solution(&solution)?, solution))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::{build_hankel, HankelShape};
    use crate::rng::trial_rng;
    use crate::spectral::smallest_singular_triplet;

    #[test]
    fn constant_sequence() {
        let p = simulate_lti(&[1.0, -1.0], &[2.5], 6).unwrap();
        assert_eq!(p, vec![2.5; 6]);
        let h = build_hankel(&p, HankelShape::new(2, 6).unwrap()).unwrap();
        assert!(smallest_singular_triplet(&h).unwrap().sigma < 1e-14);
    }

    #[test]
    fn fibonacci() {
        let p = simulate_lti(&[1.0, 1.0, -1.0], &[1.0, 1.0], 8).unwrap();
        assert_eq!(p, vec![1.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0]);
    }

    #[test]
    fn rejects_non_companion_models() {
        assert!(matches!(
            simulate_lti(&[1.0, 0.0], &[1.0], 4),
            Err(Error::InvalidModel(_))
        ));
        assert!(simulate_lti(&[1.0, 1.0], &[1.0], 1).is_err());
    }

    #[test]
    fn first_order_root() {
        let m = LtiModel::from_roots(&[Complex64::new(0.9, 0.0)]).unwrap();
        let expect = LtiModel::new(vec![-0.9, 1.0]).unwrap();
        assert!(m.angle_to(&expect) < 1e-15);
        assert!(m.coefficients()[1] > 0.0);
    }

    #[test]
    fn random_models_are_stable_and_reproducible() {
        let a = random_stable_model(5, &mut trial_rng(9, 0, 0, 0)).unwrap();
        let b = random_stable_model(5, &mut trial_rng(9, 0, 0, 0)).unwrap();
        assert_eq!(a, b);
        let p = random_trajectory(&a, 100, &mut trial_rng(9, 0, 0, 1)).unwrap();
        let head = norm2(&p[..5]);
        assert!(p
            .iter()
            .all(|x| x.is_finite() && x.abs() <= 1e3 * head.max(1.0)));
    }

    #[test]
    fn exact_trajectory_is_rank_deficient() {
        let model = random_stable_model(4, &mut trial_rng(3, 0, 0, 0)).unwrap();
        let p = random_trajectory(&model, 40, &mut trial_rng(3, 0, 0, 1)).unwrap();
        let h = build_hankel(&p, HankelShape::new(5, 40).unwrap()).unwrap();
        assert!(smallest_singular_triplet(&h).unwrap().sigma <= 1e-10 * h.norm());
    }

    #[test]
    fn identify_constant_sequence() {
        let p = vec![1.5; 8];
        let (model, sol) = identify(&p, 1, &SolveParams::default()).unwrap();
        assert!(sol.distance < 1e-12);
        let expect = LtiModel::new(vec![1.0, -1.0]).unwrap();
        assert!(model.angle_to(&expect) < 1e-10);
    }

    #[test]
    fn identify_needs_enough_samples() {
        assert!(identify(&[1.0; 5], 2, &SolveParams::default()).is_err());
    }
}
