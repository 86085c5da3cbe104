//! Hankel structured low-rank approximation.
//!
//! Given a vector `p` whose Hankel matrix `H(p)` has full row rank, find a
//! nearby `p~` with `H(p~)` rank deficient. The solver alternates a
//! norm-preserving gradient flow that minimizes the smallest singular value
//! of `H(p + eps * delta)` over unit directions `delta` with an outer
//! continuation in `eps`. Two application layers sit on top: identification
//! of linear time-invariant models from trajectories and reconstruction of
//! polygons from complex moments.

pub mod apps;
pub mod bench;
mod error;
pub mod flow;
pub mod hankel;
pub mod rng;
mod scalar;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use flow::{FlowParams, FlowState, StepRecord};
pub use hankel::{
    apply_weights, build_hankel, frobenius_weights, project_hankel, vect, AntiDiagonalCounts,
    HankelShape, WeightVector,
};
pub use num_complex::Complex64;
pub use scalar::{norm2, real_inner, Scalar};
pub use solver::{
    distance, impose_missing, solve, solve_from, solve_with_progress, DistanceMode, FlowWeights,
    OuterRecord, Solution, SolveEvent, SolveParams,
};
pub use spectral::{
    smallest_hankel_triplet, smallest_hankel_triplet_near, smallest_singular_triplet,
    SingularTriplet,
};
