use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix is not Hankel: entry ({row}, {col}) differs from its anti-diagonal")]
    NotHankel { row: usize, col: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("decomposition of {rows}x{cols} matrix failed (frobenius norm {frobenius_norm:e}): {message}")]
    Numerical {
        message: String,
        rows: usize,
        cols: usize,
        frobenius_norm: f64,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("kernel vector is not monic: last component has modulus {magnitude:e}")]
    NonMonic { magnitude: f64 },

    #[error("solver did not converge: sigma {sigma:e} above tolerance {tol:e}")]
    NotConverged { sigma: f64, tol: f64 },
}
