//! Polygons from complex moments.
//!
//! The moments `tau_k = sum_j a_j z_j^k` of a polygon with vertices `z_j`
//! satisfy a Prony-type relation: the Hankel matrix with rows
//! `(tau_r, ..., tau_{r+n})` annihilates the ascending coefficient vector
//! `(p_n, ..., p_1, 1)` of `P(z) = prod_j (z - z_j)`. Noisy moments are
//! first pulled back to a rank-deficient Hankel matrix, then the vertices are
//! read off as the roots of `P`.
//!
//! The solver works on the transposed matrix `H_{n+1}(tau)`, which has
//! `n + 1 <= N - n + 1` rows, so the monic kernel is the conjugate of its
//! left singular vector.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{solve, Solution, SolveParams};
use crate::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Complex64>,
}

impl Polygon {
    /// Vertices in cyclic order.
    pub fn new(vertices: Vec<Complex64>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::DegeneratePolygon("vertices must be finite".into()));
        }
        for (i, a) in vertices.iter().enumerate() {
            for b in &vertices[i + 1..] {
                if a == b {
                    return Err(Error::DegeneratePolygon(format!("repeated vertex {a}")));
                }
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Complex64] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.vertices.iter().map(|z| z * s).collect())
    }

    /// Triangle used throughout the polygon experiments.
    pub fn reference_triangle() -> Self {
        Self {
            vertices: vec![
                Complex64::new(-0.4655, 0.2201),
                Complex64::new(0.0082, 0.4599),
                Complex64::new(-0.3283, -0.1809),
            ],
        }
    }

    fn neighbours(&self, j: usize) -> (Complex64, Complex64, Complex64) {
        let n = self.vertices.len();
        (
            self.vertices[(j + n - 1) % n],
            self.vertices[j],
            self.vertices[(j + 1) % n],
        )
    }

    /// `A_j = (i/4) det [[z_{j-1}, conj, 1], [z_j, conj, 1], [z_{j+1}, conj, 1]]`.
    pub fn vertex_areas(&self) -> Vec<f64> {
        (0..self.len())
            .map(|j| {
                let (a, b, c) = self.neighbours(j);
                let det =
                    a * (b.conj() - c.conj()) - a.conj() * (b - c) + (b * c.conj() - b.conj() * c);
                (I * det / 4.0).re
            })
            .collect()
    }

    /// `a_j = 2 A_j / ((z_j - z_{j-1})(z_j - z_{j+1}))`.
    pub fn moment_weights(&self) -> Vec<Complex64> {
        self.vertex_areas()
            .into_iter()
            .enumerate()
            .map(|(j, area)| {
                let (a, b, c) = self.neighbours(j);
                Complex64::new(2.0 * area, 0.0) / ((b - a) * (b - c))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    /// `tau_0, ..., tau_N`.
    pub tau: Vec<Complex64>,
}

impl MomentVector {
    /// Highest moment order `N`.
    pub fn order(&self) -> usize {
        self.tau.len().saturating_sub(1)
    }
}

pub fn complex_moments(poly: &Polygon, max_order: usize) -> MomentVector {
    let a = poly.moment_weights();
    let mut powers = vec![Complex64::new(1.0, 0.0); poly.len()];
    let mut tau = Vec::with_capacity(max_order + 1);
    for _ in 0..=max_order {
        tau.push(a.iter().zip(&powers).map(|(x, y)| x * y).sum());
        for (p, z) in powers.iter_mut().zip(poly.vertices()) {
            *p *= z;
        }
    }
    MomentVector { tau }
}

/// Roots of the monic polynomial with ascending coefficients
/// `c_0, ..., c_{n-1}, 1`, as eigenvalues of its companion matrix.
pub fn monic_roots(coefficients: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = coefficients.len().saturating_sub(1);
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = coefficients[n];
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -coefficients[i] / lead
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let numerical = |message: &str| Error::Numerical {
        message: message.into(),
        rows: n,
        cols: n,
        frobenius_norm: companion.norm(),
    };
    let schur = nalgebra::Schur::try_new(companion.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| numerical("Schur iteration did not converge"))?;
    let eig = schur
        .eigenvalues()
        .ok_or_else(|| numerical("Schur form is not triangular"))?;
    Ok(eig.iter().copied().collect())
}

/// Order points counter-clockwise around their centroid, starting from the
/// smallest angle in `(-pi, pi]`.
fn cyclic_order(mut z: Vec<Complex64>) -> Vec<Complex64> {
    let c: Complex64 = z.iter().sum::<Complex64>() / z.len() as f64;
    z.sort_by(|a, b| (a - c).arg().total_cmp(&(b - c).arg()));
    z
}

/// Recover an `n`-vertex polygon from (possibly noisy) moments.
pub fn recover_vertices(
    moments: &MomentVector,
    n: usize,
    params: &SolveParams,
) -> Result<(Polygon, Solution<Complex64>)> {
    let big_n = moments.order();
    if n < 3 {
        return Err(Error::InvalidInput(
            "polygon needs at least 3 vertices".into(),
        ));
    }
    if big_n <= 2 * n {
        return Err(Error::InvalidInput(format!(
            "{n} vertices need moments up to order at least {}, got {big_n}",
            2 * n + 1
        )));
    }
    let solution = solve(&moments.tau, n + 1, params)?;
    let kernel: Vec<Complex64> = solution.kernel_left.iter().map(|x| x.conj()).collect();
    let last = kernel[n];
    if last.norm() < 1e-10 {
        return Err(Error::NonMonic {
            magnitude: last.norm(),
        });
    }
    let monic: Vec<Complex64> = kernel.iter().map(|x| x / last).collect();
    let roots = monic_roots(&monic)?;
    Ok((Polygon::new(cyclic_order(roots))?, solution))
}

fn sorted_by_real_part(z: &[Complex64]) -> Vec<Complex64> {
    let mut z = z.to_vec();
    z.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    z
}

/// Euclidean distance between vertex lists after sorting both by decreasing
/// real part (ties by decreasing imaginary part).
pub fn vertex_error(z: &Polygon, z_hat: &Polygon) -> Result<f64> {
    if z.len() != z_hat.len() {
        return Err(Error::InvalidInput(format!(
            "vertex counts differ: {} vs {}",
            z.len(),
            z_hat.len()
        )));
    }
    let a = sorted_by_real_part(z.vertices());
    let b = sorted_by_real_part(z_hat.vertices());
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Minimum over all vertex matchings of the Euclidean distance. Exhaustive,
/// so limited to at most 9 vertices.
pub fn matched_vertex_error(z: &Polygon, z_hat: &Polygon) -> Result<f64> {
    let n = z.len();
    if n != z_hat.len() {
        return Err(Error::InvalidInput("vertex counts differ".into()));
    }
    if n > 9 {
        return Err(Error::InvalidInput(
            "exhaustive matching supports at most 9 vertices".into(),
        ));
    }
    let cost: Vec<Vec<f64>> = z
        .vertices()
        .iter()
        .map(|a| {
            z_hat
                .vertices()
                .iter()
                .map(|b| (a - b).norm_sqr())
                .collect()
        })
        .collect();
    fn best(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, out: &mut f64) {
        if acc >= *out {
            return;
        }
        if row == cost.len() {
            *out = acc;
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                best(cost, row + 1, used, acc + cost[row][j], out);
                used[j] = false;
            }
        }
    }
    let mut out = f64::INFINITY;
    best(&cost, 0, &mut vec![false; n], 0.0, &mut out);
    Ok(out.sqrt())
}
