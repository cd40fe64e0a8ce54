//! Test-only oracles, independent of the library's numeric paths.

#![allow(dead_code)]

use contractive_gnn::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Entry-by-entry dot-product matmul.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
    })
}

/// All eigenvalues of a symmetric matrix by cyclic two-sided Jacobi.
pub fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

pub fn max_abs_eigenvalue(m: &Matrix) -> f64 {
    jacobi_eigenvalues(m).into_iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Spectral norm as sqrt of the top eigenvalue of MᵀM.
pub fn spectral_norm_oracle(m: &Matrix) -> f64 {
    let gram = naive_matmul(&m.transpose(), m);
    jacobi_eigenvalues(&gram).into_iter().fold(0.0, f64::max).max(0.0).sqrt()
}

/// Central-difference gradient of `f` at `x`.
pub fn central_diff(x: &Matrix, step: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let mut plus = x.clone();
            plus.set(i, j, x.get(i, j) + step);
            let mut minus = x.clone();
            minus.set(i, j, x.get(i, j) - step);
            g.set(i, j, (f(&plus) - f(&minus)) / (2.0 * step));
        }
    }
    g
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F, 1e-8)`.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    let scale = a.frobenius_norm().max(b.frobenius_norm()).max(1e-8);
    a.frobenius_distance(b).unwrap() / scale
}

/// `Σ g ⊙ y`, the scalar whose gradient with respect to `y` is `g`.
pub fn contract(g: &Matrix, y: &Matrix) -> f64 {
    g.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum()
}

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> contractive_gnn::Graph {
    let mut g = contractive_gnn::Graph::empty(n).unwrap();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                g.add_edge(i, j);
            }
        }
    }
    g
}
