//! Spectral norm of symmetric matrices by power iteration.

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
pub const POWER_TOLERANCE: f64 = 1e-12;
/// Relative residual `‖M²v − μv‖ / μ` required alongside the Rayleigh test.
pub const POWER_RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const MAX_POWER_ITERATIONS: usize = 10_000;

/// Largest absolute eigenvalue of a symmetric matrix and a unit eigenvector
/// for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TopEigenpair {
    pub norm: f64,
    pub vector: Vec<f64>,
}

/// `‖M‖₂ = max |λ|` for symmetric `M`.
pub fn symmetric_spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(symmetric_top_eigenpair(m)?.norm)
}

/// Power iteration on `M·M` from the normalized all-ones vector. Squaring
/// merges `±λ`, so bipartite spectra do not oscillate.
///
/// All-ones has a positive inner product with the Perron vector of any
/// non-negative matrix, so the iteration cannot stall in a lower eigenspace
/// there. Matrices with negative entries carry no such guarantee and are
/// routed through the SVD instead.
pub fn symmetric_top_eigenpair(m: &Matrix) -> Result<TopEigenpair> {
    if !m.is_symmetric(SYMMETRY_TOLERANCE) {
        return Err(Error::Contract(format!(
            "symmetric_spectral_norm requires a symmetric matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    if m.max_abs() == 0.0 {
        return Ok(TopEigenpair {
            norm: 0.0,
            vector: ones,
        });
    }
    if m.as_slice().iter().any(|&x| x < 0.0) {
        let f = svd::svd(m)?;
        let vector = (0..n).map(|i| f.v.get(i, 0)).collect();
        return Ok(TopEigenpair { norm: f.s[0], vector });
    }

    let mut v = ones;
    let mut prev = f64::NAN;
    for _ in 0..MAX_POWER_ITERATIONS {
        let w = apply(m, &v);
        let mu = norm_sq(&w);
        let z = apply(m, &w);
        let z_norm = norm_sq(&z).sqrt();
        if mu == 0.0 || z_norm == 0.0 {
            return Ok(TopEigenpair { norm: 0.0, vector: v });
        }
        let residual = z
            .iter()
            .zip(&v)
            .map(|(zi, vi)| (zi - mu * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if (mu - prev).abs() <= POWER_TOLERANCE * mu && residual <= POWER_RESIDUAL_TOLERANCE * mu {
            return Ok(TopEigenpair {
                norm: mu.sqrt(),
                vector: v,
            });
        }
        prev = mu;
        v = z.into_iter().map(|x| x / z_norm).collect();
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: MAX_POWER_ITERATIONS,
    })
}

fn apply(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| m.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}
