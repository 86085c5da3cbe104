//! Smallest singular triplet of a dense matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hankel::HankelShape;
use crate::scalar::Scalar;

const SVD_MAX_ITERATIONS: usize = 10_000;

/// Jacobi sweeps before the warm path gives up and uses the dense SVD.
const JACOBI_MAX_SWEEPS: usize = 30;

/// Components below this modulus are skipped when fixing the phase of `v`.
const PHASE_PIVOT_TOL: f64 = 1e-8;

/// Relative gap below which `sigma` is treated as (numerically) multiple.
pub const MULTIPLICITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriplet<T: Scalar> {
    pub sigma: f64,
    pub u: DVector<T>,
    pub v: DVector<T>,
    /// Second smallest minus smallest singular value; infinite for a
    /// single-row matrix.
    pub gap: f64,
    /// All left singular vectors as columns, in no particular order. Used
    /// to warm start the triplet of a nearby matrix.
    pub basis: DMatrix<T>,
}

impl<T: Scalar> SingularTriplet<T> {
    /// True when the gap is too small relative to `scale` (usually the
    /// Frobenius norm of the matrix) to trust the derivative formula.
    pub fn is_nearly_multiple(&self, scale: f64) -> bool {
        self.gap < MULTIPLICITY_TOL * scale
    }

    /// Flip the joint phase of `(u, v)` if `u` points away from `prev`.
    pub fn align_with(&mut self, prev: &SingularTriplet<T>) {
        if prev.u.dotc(&self.u).real() < 0.0 {
            self.u.neg_mut();
            self.v.neg_mut();
        }
    }
}

/// Smallest singular value of `h` (with `rows <= cols`) and its singular
/// vectors, from a dense decomposition.
///
/// The first component of `v` with modulus above `1e-8` is made real and
/// positive, so the result is a deterministic function of `h`.
pub fn smallest_singular_triplet<T: Scalar>(h: &DMatrix<T>) -> Result<SingularTriplet<T>> {
    let (rows, cols) = h.shape();
    if rows == 0 || rows > cols {
        return Err(Error::Shape(format!(
            "smallest triplet needs 1 <= rows <= cols, got {rows}x{cols}"
        )));
    }
    if rows < cols {
        triplet_of_wide(h.adjoint())
    } else {
        triplet_of_square(h.clone())
    }
}

/// [`smallest_singular_triplet`] of `H_m(p)`, built without the
/// intermediate matrix.
pub fn smallest_hankel_triplet<T: Scalar>(
    p: &[T],
    shape: HankelShape,
) -> Result<SingularTriplet<T>> {
    shape.check_len(p.len())?;
    let (rows, cols) = (shape.rows(), shape.cols());
    if rows > cols {
        return Err(Error::Shape(format!(
            "smallest triplet needs 1 <= rows <= cols, got {rows}x{cols}"
        )));
    }
    if rows < cols {
        triplet_of_wide(DMatrix::from_fn(cols, rows, |j, i| p[i + j].conjugate()))
    } else {
        triplet_of_square(DMatrix::from_fn(rows, cols, |i, j| p[i + j]))
    }
}

/// [`smallest_hankel_triplet`] warm started from the left basis of
/// `near`, the triplet of a nearby Hankel matrix of the same shape.
///
/// Runs one-sided Jacobi on the triangular factor of `H^H` rotated by that
/// basis, which needs only a few sweeps for a small change. Falls back to
/// the dense path when the basis does not fit, the iteration does not
/// settle or `sigma` is exactly zero.
pub fn smallest_hankel_triplet_near<T: Scalar>(
    p: &[T],
    shape: HankelShape,
    near: &SingularTriplet<T>,
) -> Result<SingularTriplet<T>> {
    shape.check_len(p.len())?;
    let (rows, cols) = (shape.rows(), shape.cols());
    if rows > cols || near.basis.shape() != (rows, rows) {
        return smallest_hankel_triplet(p, shape);
    }
    let mut a = DMatrix::from_fn(cols, rows, |j, i| p[i + j].conjugate());
    if !a.iter().all(|x| x.is_finite_value()) {
        return Err(numerical(
            "matrix has non-finite entries",
            rows,
            cols,
            a.norm(),
        ));
    }
    let taus = householder_qr(&mut a);
    match jacobi(&a, &near.basis) {
        Some((sigma, u, w, gap, basis)) => {
            let v = apply_q(&a, &taus, &w);
            Ok(finish(sigma, u, v, gap, basis))
        }
        None => smallest_hankel_triplet(p, shape),
    }
}

fn numerical(message: &str, rows: usize, cols: usize, frobenius_norm: f64) -> Error {
    Error::Numerical {
        message: message.to_string(),
        rows,
        cols,
        frobenius_norm,
    }
}

fn triplet_of_square<T: Scalar>(h: DMatrix<T>) -> Result<SingularTriplet<T>> {
    let (rows, cols) = h.shape();
    if !h.iter().all(|x| x.is_finite_value()) {
        return Err(numerical(
            "matrix has non-finite entries",
            rows,
            cols,
            h.norm(),
        ));
    }
    let norm = h.norm();
    let (sigma, u, v, gap, basis) = smallest_of(h, norm)?;
    Ok(finish(sigma, u, v, gap, basis))
}

/// Triplet of `H` given `a = H^H` with more rows than columns.
///
/// With `H^H = Q R` we have `H = R^H Q^H`, so the singular values of `H`
/// are those of the square `R^H` and its right singular vectors are `Q`
/// applied to those of `R^H`.
fn triplet_of_wide<T: Scalar>(mut a: DMatrix<T>) -> Result<SingularTriplet<T>> {
    let (cols, rows) = a.shape();
    if !a.iter().all(|x| x.is_finite_value()) {
        return Err(numerical(
            "matrix has non-finite entries",
            rows,
            cols,
            a.norm(),
        ));
    }
    let norm = a.norm();
    let taus = householder_qr(&mut a);
    let square = DMatrix::from_fn(rows, rows, |i, j| {
        if i >= j {
            a[(j, i)].conjugate()
        } else {
            T::zero()
        }
    });
    let (sigma, u, w, gap, basis) = smallest_of(square, norm).map_err(|e| match e {
        Error::Numerical { message, .. } => numerical(&message, rows, cols, norm),
        other => other,
    })?;
    let v = apply_q(&a, &taus, &w);
    Ok(finish(sigma, u, v, gap, basis))
}

/// Smallest singular value, left and right vectors, gap and left basis of
/// a square matrix.
type Parts<T> = (f64, DVector<T>, DVector<T>, f64, DMatrix<T>);

fn smallest_of<T: Scalar>(h: DMatrix<T>, norm: f64) -> Result<Parts<T>> {
    let (rows, cols) = h.shape();
    let svd = nalgebra::SVD::try_new(h, true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| numerical("SVD iteration did not converge", rows, cols, norm))?;
    let sv = &svd.singular_values;
    let (u_mat, vt_mat) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => {
            return Err(numerical(
                "SVD did not return singular vectors",
                rows,
                cols,
                norm,
            ))
        }
    };

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|a, b| sv[*a].total_cmp(&sv[*b]).then(a.cmp(b)));
    let idx = order[0];
    let sigma = sv[idx].max(0.0);
    let gap = order
        .get(1)
        .map_or(f64::INFINITY, |j| (sv[*j] - sigma).max(0.0));
    let u: DVector<T> = u_mat.column(idx).into_owned();
    let w: DVector<T> = vt_mat.row(idx).adjoint();
    Ok((sigma, u, w, gap, u_mat.clone()))
}

/// One-sided Jacobi on `G = R V`, with `R` the upper triangle of `a` and
/// `V` starting at `start`, until the columns of `G` are orthogonal.
/// Then `V` holds the right singular vectors of `R` (the left ones of `H`)
/// and the column norms of `G` the singular values.
fn jacobi<T: Scalar>(a: &DMatrix<T>, start: &DMatrix<T>) -> Option<Parts<T>> {
    let m = start.nrows();
    let mut v = start.clone();
    let mut g = DMatrix::<T>::zeros(m, m);
    for j in 0..m {
        for k in 0..m {
            let vkj = v[(k, j)];
            for i in 0..=k {
                g[(i, j)] += a[(i, k)] * vkj;
            }
        }
    }
    let tol = m as f64 * f64::EPSILON;
    let mut settled = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..m.saturating_sub(1) {
            for j in i + 1..m {
                let (x, y) = column_pair(g.as_mut_slice(), m, i, j);
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, T::zero());
                for (xk, yk) in x.iter().zip(y.iter()) {
                    alpha += xk.modulus_squared();
                    beta += yk.modulus_squared();
                    gamma += xk.conjugate() * *yk;
                }
                let off = gamma.modulus();
                if off == 0.0 || off <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // With y scaled by conj(gamma)/|gamma| the pair is real.
                let phase = gamma.unscale(off).conjugate();
                let zeta = (beta - alpha) / (2.0 * off);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(x, y, phase, c, s);
                let (x, y) = column_pair(v.as_mut_slice(), m, i, j);
                rotate(x, y, phase, c, s);
            }
        }
        if !rotated {
            settled = true;
            break;
        }
    }
    if !settled {
        return None;
    }

    let sv: Vec<f64> = g.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| sv[*a].total_cmp(&sv[*b]).then(a.cmp(b)));
    let idx = order[0];
    let sigma = sv[idx];
    if sigma == 0.0 {
        return None;
    }
    let gap = order.get(1).map_or(f64::INFINITY, |j| sv[*j] - sigma);
    let u: DVector<T> = v.column(idx).into_owned();
    // R^{-H} u is w / sigma up to terms damped by sigma / sigma_k, so it
    // keeps w accurate when sigma is tiny. The column of G does not.
    let mut y = u.clone();
    for i in 0..m {
        let mut acc = y[i];
        for k in 0..i {
            acc -= a[(k, i)].conjugate() * y[k];
        }
        y[i] = acc / a[(i, i)].conjugate();
    }
    let y_norm = y.norm();
    let w = if y_norm.is_finite() && y_norm > 0.0 && y.iter().all(|x| x.is_finite_value()) {
        y.unscale(y_norm)
    } else {
        g.column(idx).unscale(sigma)
    };
    Some((sigma, u, w, gap, v))
}

/// Distinct columns `i < j` of a column-major `m`-row buffer.
fn column_pair<T>(data: &mut [T], m: usize, i: usize, j: usize) -> (&mut [T], &mut [T]) {
    let (lo, hi) = data.split_at_mut(j * m);
    (&mut lo[i * m..(i + 1) * m], &mut hi[..m])
}

/// `x <- c x - s phase y`, `y <- s x + c phase y`.
fn rotate<T: Scalar>(x: &mut [T], y: &mut [T], phase: T, c: f64, s: f64) {
    for (xk, yk) in x.iter_mut().zip(y.iter_mut()) {
        let xo = *xk;
        let yo = phase * *yk;
        *xk = xo.scale(c) - yo.scale(s);
        *yk = xo.scale(s) + yo.scale(c);
    }
}

fn finish<T: Scalar>(
    sigma: f64,
    mut u: DVector<T>,
    mut v: DVector<T>,
    gap: f64,
    basis: DMatrix<T>,
) -> SingularTriplet<T> {
    if let Some(pivot) = v.iter().find(|x| x.modulus() > PHASE_PIVOT_TOL) {
        let rot = pivot.phase().conjugate();
        u *= rot;
        v *= rot;
    }
    SingularTriplet {
        sigma,
        u,
        v,
        gap,
        basis,
    }
}

/// Householder QR of a tall `a` in place, LAPACK style: `R` ends up in the
/// upper triangle and reflector `k` is `I - tau_k v_k v_k^H` with
/// `v_k = (1, a[k+1.., k])`. Returns the `tau_k`.
fn householder_qr<T: Scalar>(a: &mut DMatrix<T>) -> Vec<T> {
    let (n, m) = a.shape();
    let data = a.as_mut_slice();
    let mut taus = Vec::with_capacity(m);
    for k in 0..m {
        let (left, right) = data.split_at_mut((k + 1) * n);
        let col = &mut left[k * n..];
        let alpha = col[k];
        let tail: f64 = col[k + 1..].iter().map(|x| x.modulus_squared()).sum();
        if tail == 0.0 && alpha.imaginary() == 0.0 {
            taus.push(T::zero());
            continue;
        }
        let norm = (alpha.modulus_squared() + tail).sqrt();
        let beta = if alpha.real() >= 0.0 { -norm } else { norm };
        let beta_t = T::from_real(beta);
        let tau = (beta_t - alpha).unscale(beta);
        let scale = T::one() / (alpha - beta_t);
        for x in &mut col[k + 1..] {
            *x *= scale;
        }
        col[k] = beta_t;
        let v = &col[k + 1..];
        // Columns to the right get H_k^H = I - conj(tau) v v^H.
        let tau_h = tau.conjugate();
        for other in right.chunks_exact_mut(n) {
            let (head, rest) = other[k..].split_at_mut(1);
            let s = v
                .iter()
                .zip(rest.iter())
                .fold(head[0], |acc, (vi, xi)| acc + vi.conjugate() * *xi);
            let f = tau_h * s;
            head[0] -= f;
            for (xi, vi) in rest.iter_mut().zip(v) {
                *xi -= f * *vi;
            }
        }
        taus.push(tau);
    }
    taus
}

/// `Q [w; 0]` for the thin factor of [`householder_qr`].
fn apply_q<T: Scalar>(a: &DMatrix<T>, taus: &[T], w: &DVector<T>) -> DVector<T> {
    let n = a.nrows();
    let data = a.as_slice();
    let mut y = DVector::zeros(n);
    y.rows_mut(0, w.len()).copy_from(w);
    let y_data = y.as_mut_slice();
    for (k, tau) in taus.iter().enumerate().rev() {
        let v = &data[k * n + k + 1..(k + 1) * n];
        let (head, rest) = y_data[k..].split_at_mut(1);
        let s = v
            .iter()
            .zip(rest.iter())
            .fold(head[0], |acc, (vi, yi)| acc + vi.conjugate() * *yi);
        let f = *tau * s;
        head[0] -= f;
        for (yi, vi) in rest.iter_mut().zip(v) {
            *yi -= f * *vi;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn identity_has_double_singular_value() {
        let t = smallest_singular_triplet(&DMatrix::<f64>::identity(2, 2)).unwrap();
        assert!((t.sigma - 1.0).abs() < 1e-15);
        assert!(t.gap < 1e-15);
        assert!(t.is_nearly_multiple(2f64.sqrt()));
    }

    #[test]
    fn rank_one_hankel() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let t = smallest_singular_triplet(&h).unwrap();
        assert!(t.sigma < 1e-14);
        assert!(!t.is_nearly_multiple(h.norm()));
    }

    #[test]
    fn rejects_tall_matrices() {
        assert!(smallest_singular_triplet(&DMatrix::<f64>::zeros(3, 2)).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut h = DMatrix::<f64>::identity(2, 3);
        h[(0, 1)] = f64::NAN;
        assert!(matches!(
            smallest_singular_triplet(&h),
            Err(Error::Numerical { .. })
        ));
    }

    #[test]
    fn single_row_has_infinite_gap() {
        let h = DMatrix::from_row_slice(1, 3, &[3.0, 0.0, 4.0]);
        let t = smallest_singular_triplet(&h).unwrap();
        assert!((t.sigma - 5.0).abs() < 1e-14);
        assert!(t.gap.is_infinite());
    }

    #[test]
    fn complex_phase_convention() {
        let h = DMatrix::from_row_slice(
            2,
            3,
            &[
                Complex64::new(1.0, 0.5),
                Complex64::new(0.0, -1.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(0.3, 0.3),
            ],
        );
        let t = smallest_singular_triplet(&h).unwrap();
        let pivot = t.v.iter().find(|x| x.norm() > 1e-8).unwrap();
        assert!(pivot.im.abs() < 1e-15 && pivot.re > 0.0);
        let hv = &h * &t.v;
        assert!((hv - t.u.scale(t.sigma)).norm() < 1e-12 * h.norm());
    }

    #[test]
    fn residuals_on_a_random_wide_matrix() {
        let h = DMatrix::from_fn(4, 6, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 1.7 + 0.1 * j as f64
        });
        let t = smallest_singular_triplet(&h).unwrap();
        assert!((t.u.norm() - 1.0).abs() < 1e-12);
        assert!((t.v.norm() - 1.0).abs() < 1e-12);
        assert!((&h * &t.v - t.u.scale(t.sigma)).norm() < 1e-10 * h.norm());
        assert!((h.adjoint() * &t.u - t.v.scale(t.sigma)).norm() < 1e-10 * h.norm());
    }

    #[test]
    fn complex_wide_matrix_matches_full_svd() {
        let h = DMatrix::from_fn(3, 8, |i, j| {
            Complex64::new(
                ((i * 5 + j * 3) % 7) as f64 - 2.9,
                ((i + 2 * j) % 4) as f64 - 1.2,
            )
        });
        let t = smallest_singular_triplet(&h).unwrap();
        let sv = h.clone().svd(false, false).singular_values;
        let sigma = sv.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((t.sigma - sigma).abs() < 1e-13 * h.norm());
        assert!((t.v.norm() - 1.0).abs() < 1e-13);
        assert!((&h * &t.v - t.u.scale(t.sigma)).norm() < 1e-12 * h.norm());
        assert!((h.adjoint() * &t.u - t.v.scale(t.sigma)).norm() < 1e-12 * h.norm());
    }

    #[test]
    fn tiny_sigma_keeps_accurate_vectors() {
        // Rank-one Hankel matrix plus a perturbation of size 1e-10.
        let p: Vec<f64> = (0..9)
            .map(|k| 0.7f64.powi(k) + 1e-10 * ((k * k) % 3) as f64)
            .collect();
        let h = DMatrix::from_fn(3, 7, |i, j| p[i + j]);
        let t = smallest_singular_triplet(&h).unwrap();
        assert!((&h * &t.v - t.u.scale(t.sigma)).norm() < 1e-14 * h.norm());
        assert!((h.adjoint() * &t.u - t.v.scale(t.sigma)).norm() < 1e-14 * h.norm());
    }

    fn check_warm<T: Scalar>(p: &[T], rows: usize, near: &SingularTriplet<T>, rel: f64) {
        let shape = HankelShape::new(rows, p.len()).unwrap();
        let h = DMatrix::from_fn(rows, p.len() + 1 - rows, |i, j| p[i + j]);
        let cold = smallest_singular_triplet(&h).unwrap();
        let warm = smallest_hankel_triplet_near(p, shape, near).unwrap();
        let scale = h.norm();
        assert!((warm.sigma - cold.sigma).abs() < 1e-13 * scale);
        assert!((warm.gap - cold.gap).abs() < 1e-12 * scale);
        assert!((warm.u.norm() - 1.0).abs() < 1e-13);
        assert!((warm.v.norm() - 1.0).abs() < 1e-13);
        assert!((&h * &warm.v - warm.u.scale(warm.sigma)).norm() < rel * scale);
        assert!((h.adjoint() * &warm.u - warm.v.scale(warm.sigma)).norm() < rel * scale);
        let basis = &warm.basis;
        let gram = basis.adjoint() * basis;
        assert!((gram - DMatrix::<T>::identity(rows, rows)).norm() < 1e-13);
    }

    #[test]
    fn warm_start_matches_dense_path() {
        let p: Vec<f64> = (0..14)
            .map(|k| ((k * 7) % 5) as f64 - 1.9 + 0.3 * k as f64)
            .collect();
        let shape = HankelShape::new(5, 14).unwrap();
        let near = smallest_hankel_triplet(&p, shape).unwrap();
        let moved: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, x)| x + 1e-3 * (k % 3) as f64)
            .collect();
        check_warm(&moved, 5, &near, 1e-12);
        // A far start only costs sweeps.
        let far: Vec<f64> = p.iter().rev().copied().collect();
        check_warm(&far, 5, &near, 1e-12);
        // Square shape.
        let sq: Vec<f64> = p[..9].to_vec();
        let near_sq = smallest_hankel_triplet(&sq, HankelShape::new(5, 9).unwrap()).unwrap();
        check_warm(&sq, 5, &near_sq, 1e-12);
    }

    #[test]
    fn warm_start_complex() {
        let p: Vec<Complex64> = (0..12)
            .map(|k| Complex64::new(((k * 5) % 7) as f64 - 2.9, ((3 * k) % 4) as f64 - 1.2))
            .collect();
        let shape = HankelShape::new(4, 12).unwrap();
        let near = smallest_hankel_triplet(&p, shape).unwrap();
        let moved: Vec<Complex64> = p
            .iter()
            .enumerate()
            .map(|(k, x)| x + Complex64::new(0.0, 1e-2 * (k % 2) as f64))
            .collect();
        check_warm(&moved, 4, &near, 1e-12);
    }

    #[test]
    fn warm_start_tiny_sigma() {
        let p: Vec<f64> = (0..9)
            .map(|k| 0.7f64.powi(k) + 1e-10 * ((k * k) % 3) as f64)
            .collect();
        let shape = HankelShape::new(3, 9).unwrap();
        let near = smallest_hankel_triplet(&p, shape).unwrap();
        let moved: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(k, x)| x + 1e-12 * k as f64)
            .collect();
        check_warm(&moved, 3, &near, 1e-14);
        // Exactly rank one: sigma is zero and the dense path answers.
        let exact: Vec<f64> = (0..9).map(|k| 0.5f64.powi(k)).collect();
        check_warm(&exact, 3, &near, 1e-14);
    }

    #[test]
    fn warm_start_ignores_mismatched_basis() {
        let p: Vec<f64> = (0..10).map(|k| (k as f64).sin()).collect();
        let other = smallest_hankel_triplet(&p[..7], HankelShape::new(2, 7).unwrap()).unwrap();
        check_warm(&p, 4, &other, 1e-12);
    }

    #[test]
    fn align_flips_opposite_pairs() {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, 2.0, 0.5, -1.0]);
        let t = smallest_singular_triplet(&h).unwrap();
        let mut flipped = t.clone();
        flipped.u.neg_mut();
        flipped.v.neg_mut();
        flipped.align_with(&t);
        assert_eq!(flipped, t);
    }
}
