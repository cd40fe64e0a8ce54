//! Dense linear algebra: the matrix type, Jacobi SVD, and symmetric
//! spectral norms.

mod eigen;
mod matrix;
pub mod svd;

pub use eigen::{
    symmetric_spectral_norm, symmetric_top_eigenpair, TopEigenpair, MAX_POWER_ITERATIONS,
    POWER_TOLERANCE, SYMMETRY_TOLERANCE,
};
pub use matrix::{Matrix, DEFAULT_KRON_CAP};
pub use svd::{spectral_norm, svd, SvdFactors};
