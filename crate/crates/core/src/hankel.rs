//! Hankel structure bookkeeping.
//!
//! A length-`T` vector `p` maps to the `m x n` matrix with entry `(i, j)`
//! equal to `p[i + j]` (zero-based), where `T = m + n - 1`. Anti-diagonal
//! `k` holds `c_k = min(k + 1, m, n, T - k)` entries, and the orthogonal
//! projection onto the Hankel subspace averages each anti-diagonal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real_inner, Scalar};

/// Geometry of an `m x n` Hankel matrix built from a length `T = m + n - 1`
/// vector, with `m <= n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HankelShape {
    rows: usize,
    cols: usize,
}

impl HankelShape {
    /// Shape with `rows` rows for a vector of length `len`.
    pub fn new(rows: usize, len: usize) -> Result<Self> {
        if rows == 0 || len < rows {
            return Err(Error::Shape(format!(
                "cannot build a Hankel matrix with {rows} rows from {len} entries"
            )));
        }
        Self::from_dims(rows, len - rows + 1)
    }

    pub fn from_dims(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty Hankel shape {rows}x{cols}")));
        }
        if rows > cols {
            return Err(Error::Shape(format!(
                "Hankel shape {rows}x{cols} has more rows than columns; transpose the problem"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Length `T` of the generating vector.
    pub fn len(&self) -> usize {
        self.rows + self.cols - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn anti_diagonal_counts(&self) -> AntiDiagonalCounts {
        AntiDiagonalCounts::for_dims(self.rows, self.cols)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape(format!(
                "vector of length {len} does not match {}x{} Hankel shape (needs {})",
                self.rows,
                self.cols,
                self.len()
            )));
        }
        Ok(())
    }
}

/// Number of matrix entries on each anti-diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntiDiagonalCounts(Vec<usize>);

impl AntiDiagonalCounts {
    fn for_dims(rows: usize, cols: usize) -> Self {
        let len = rows + cols - 1;
        Self(
            (0..len)
                .map(|k| (k + 1).min(rows).min(cols).min(len - k))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

/// Per-entry nonnegative weights. A zero weight freezes the entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::InvalidInput(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(Self(weights))
    }

    pub fn unit(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entry-wise product with another weight vector.
    pub fn masked(&self, mask: &WeightVector) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::Shape("weight vectors differ in length".into()));
        }
        Self::new(self.0.iter().zip(&mask.0).map(|(a, b)| a * b).collect())
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

pub fn build_hankel<T: Scalar>(p: &[T], shape: HankelShape) -> Result<DMatrix<T>> {
    shape.check_len(p.len())?;
    Ok(DMatrix::from_fn(shape.rows, shape.cols, |i, j| p[i + j]))
}

/// Inverse of [`build_hankel`]. Fails unless every anti-diagonal holds one
/// exactly repeated value.
pub fn vect<T: Scalar>(h: &DMatrix<T>) -> Result<Vec<T>> {
    let (rows, cols) = h.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    let mut p = Vec::with_capacity(rows + cols - 1);
    p.extend((0..cols).map(|j| h[(0, j)]));
    p.extend((1..rows).map(|i| h[(i, cols - 1)]));
    for i in 0..rows {
        for j in 0..cols {
            if h[(i, j)] != p[i + j] {
                return Err(Error::NotHankel { row: i, col: j });
            }
        }
    }
    Ok(p)
}

/// Anti-diagonal averages of `b`: the vector `q` with `H(q)` the Frobenius
/// orthogonal projection of `b` onto the Hankel subspace.
pub fn project_hankel<T: Scalar>(b: &DMatrix<T>) -> Vec<T> {
    let (rows, cols) = b.shape();
    let mut sums = vec![T::zero(); rows + cols - 1];
    for j in 0..cols {
        for i in 0..rows {
            sums[i + j] += b[(i, j)];
        }
    }
    divide_by_counts(sums, rows, cols)
}

/// `project_hankel(u v^H)` without forming the outer product.
pub fn project_outer<T: Scalar>(u: &DVector<T>, v: &DVector<T>) -> Vec<T> {
    let (rows, cols) = (u.len(), v.len());
    let mut sums = vec![T::zero(); rows + cols - 1];
    for (j, vj) in v.iter().enumerate() {
        let vj = vj.conjugate();
        for (i, ui) in u.iter().enumerate() {
            sums[i + j] += *ui * vj;
        }
    }
    divide_by_counts(sums, rows, cols)
}

fn divide_by_counts<T: Scalar>(mut sums: Vec<T>, rows: usize, cols: usize) -> Vec<T> {
    let counts = AntiDiagonalCounts::for_dims(rows, cols);
    for (s, c) in sums.iter_mut().zip(counts.as_slice()) {
        *s = s.unscale(*c as f64);
    }
    sums
}

pub fn apply_weights<T: Scalar>(g: &[T], w: &WeightVector) -> Vec<T> {
    debug_assert_eq!(g.len(), w.len());
    g.iter()
        .zip(w.as_slice())
        .map(|(x, wi)| x.scale(*wi))
        .collect()
}

/// Weights for which `||p||_w = ||H(p)||_F`.
pub fn frobenius_weights(shape: HankelShape) -> WeightVector {
    WeightVector(
        shape
            .anti_diagonal_counts()
            .as_slice()
            .iter()
            .map(|c| *c as f64)
            .collect(),
    )
}

/// `Re <H(a), H(b)>_F` computed on the generating vectors.
pub fn hankel_inner<T: Scalar>(a: &[T], b: &[T], shape: HankelShape) -> f64 {
    let counts = shape.anti_diagonal_counts();
    a.iter()
        .zip(b)
        .zip(counts.as_slice())
        .map(|((x, y), c)| *c as f64 * (x.conjugate() * *y).real())
        .sum()
}

pub fn frobenius_norm<T: Scalar>(p: &[T], shape: HankelShape) -> f64 {
    hankel_inner(p, p, shape).sqrt()
}

/// `Re <a, b>` for matrices.
pub fn matrix_inner<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    real_inner(a.as_slice(), b.as_slice())
}
