//! Thin singular value decomposition by one-sided Jacobi rotations.
//!
//! The input is scaled by its largest absolute entry, then pairs of columns
//! are rotated until every pair is orthogonal to within a relative
//! tolerance. Column norms of the rotated matrix are the singular values,
//! the normalized columns are `u`, and the accumulated rotations are `v`.
//! Wide inputs are handled through their transpose.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Pair `(p, q)` is treated as orthogonal once `|a_p·a_q| <= tol * |a_p| |a_q|`.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Maximum number of full sweeps over all column pairs.
pub const MAX_SWEEPS: usize = 60;

/// `m = u · diag(s) · vᵀ` with `u: m×k`, `v: n×k`, `k = min(m, n)`.
///
/// `s` is non-negative and sorted descending; `u` and `v` have orthonormal
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    /// `u · diag(values) · vᵀ`. `values.len()` must equal `s.len()`.
    pub fn recompose_with(&self, values: &[f64]) -> Result<Matrix> {
        if values.len() != self.s.len() {
            return Err(Error::shape(
                "recompose_with",
                format!("{} singular values", self.s.len()),
                format!("{}", values.len()),
            ));
        }
        let (m, n, k) = (self.u.rows(), self.v.rows(), self.s.len());
        let mut out = vec![0.0; m * n];
        for (r, &sr) in values.iter().enumerate().take(k) {
            if sr == 0.0 {
                continue;
            }
            for i in 0..m {
                let ui = self.u.get(i, r) * sr;
                if ui == 0.0 {
                    continue;
                }
                let row = &mut out[i * n..(i + 1) * n];
                for (j, o) in row.iter_mut().enumerate() {
                    *o += ui * self.v.get(j, r);
                }
            }
        }
        Matrix::new(m, n, out).map_err(|_| Error::NonFinite("recompose_with"))
    }

    pub fn reconstruct(&self) -> Result<Matrix> {
        self.recompose_with(&self.s)
    }
}

/// Column-major scratch matrix used during the sweeps.
struct Columns {
    rows: usize,
    data: Vec<f64>,
}

impl Columns {
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn rotate(&mut self, p: usize, q: usize, c: f64, s: f64) {
        let rows = self.rows;
        let (lo, hi) = self.data.split_at_mut(q * rows);
        let cp = &mut lo[p * rows..(p + 1) * rows];
        let cq = &mut hi[..rows];
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let (a, b) = (*x, *y);
            *x = c * a - s * b;
            *y = s * a + c * b;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    if m.rows() >= m.cols() {
        svd_tall(m)
    } else {
        let t = svd_tall(&m.transpose())?;
        Ok(SvdFactors {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

/// Largest singular value, i.e. the induced 2-norm.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.s[0])
}

fn svd_tall(m: &Matrix) -> Result<SvdFactors> {
    let (rows, cols) = m.shape();
    debug_assert!(rows >= cols);
    let scale = m.max_abs();

    let mut a = Columns {
        rows,
        data: vec![0.0; rows * cols],
    };
    if scale > 0.0 {
        for j in 0..cols {
            for i in 0..rows {
                a.data[j * rows + i] = m.get(i, j) / scale;
            }
        }
    }
    let mut v = Columns {
        rows: cols,
        data: vec![0.0; cols * cols],
    };
    for j in 0..cols {
        v.data[j * cols + j] = 1.0;
    }

    // Columns this small are numerical noise: they cannot be made relatively
    // orthogonal and are replaced by an orthonormal completion below.
    let frob_sq: f64 = a.data.iter().map(|x| x * x).sum();
    let noise_sq = f64::EPSILON * f64::EPSILON * frob_sq;

    let mut converged = cols < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let alpha = dot(a.col(p), a.col(p));
                let beta = dot(a.col(q), a.col(q));
                let gamma = dot(a.col(p), a.col(q));
                if alpha <= noise_sq
                    || beta <= noise_sq
                    || gamma.abs() <= JACOBI_TOLERANCE * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                a.rotate(p, q, c, s);
                v.rotate(p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "one-sided Jacobi SVD",
            iterations: MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..cols).map(|j| dot(a.col(j), a.col(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    // Stable: equal values keep their column order.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s_max = norms[order[0]];
    let negligible = s_max * f64::EPSILON * rows.max(cols) as f64;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let nrm = norms[j];
        if nrm > negligible && nrm > 0.0 {
            u_cols.push(a.col(j).iter().map(|x| x / nrm).collect());
        } else {
            u_cols.push(Vec::new());
            pending.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &pending, rows);

    let mut u = Matrix::zeros(rows, cols);
    let mut vm = Matrix::zeros(cols, cols);
    let mut s = Vec::with_capacity(cols);
    for (slot, &j) in order.iter().enumerate() {
        s.push(norms[j] * scale);
        for i in 0..rows {
            u.set(i, slot, u_cols[slot][i]);
        }
        for i in 0..cols {
            vm.set(i, slot, v.col(j)[i]);
        }
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd"));
    }
    Ok(SvdFactors { u, s, v: vm })
}

/// Fills the `pending` slots with unit vectors orthogonal to every other
/// column, choosing at each step the standard basis vector with the largest
/// residual after two rounds of Gram-Schmidt.
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize], rows: usize) {
    for &slot in pending {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..rows {
            let mut cand = vec![0.0; rows];
            cand[e] = 1.0;
            for _ in 0..2 {
                for c in cols.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(c, &cand);
                    for (x, y) in cand.iter_mut().zip(c) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, mut cand) = best.expect("at least one row");
        cand.iter_mut().for_each(|x| *x /= nrm);
        cols[slot] = cand;
    }
}
