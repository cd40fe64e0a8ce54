use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Kronecker product (rows and cols each) built unless a caller
/// asks for a different cap.
pub const DEFAULT_KRON_CAP: usize = 4096;

/// Dense `f64` matrix in row-major order.
///
/// Both dimensions are at least one and every entry is finite. Every
/// constructor and every arithmetic operation checks this, so a `Matrix`
/// in hand never carries NaN or infinity.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Wire form: `{"rows": r, "cols": c, "data": [row-major numbers]}`.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::new(r.rows, r.cols, r.data)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::parse(
                "rows/cols",
                format!("dimensions must be positive, got {rows}x{cols}"),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::parse(
                "data",
                format!("expected {} entries for {rows}x{cols}, got {}", rows * cols, data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::parse("data", format!("entry {pos} is not finite")));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Wraps the result of an arithmetic kernel, rejecting overflow.
    fn from_op(op: &'static str, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(data.len(), rows * cols);
        if data.iter().all(|v| v.is_finite()) {
            Ok(Matrix { rows, cols, data })
        } else {
            Err(Error::NonFinite(op))
        }
    }

    /// Builds from row slices. Panics on ragged, empty or non-finite input;
    /// meant for literals in code and tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(
            rows.iter().all(|r| r.as_ref().len() == cols),
            "ragged rows in Matrix::from_rows"
        );
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Matrix::new(rows.len(), cols, data).expect("invalid literal matrix")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Square diagonal matrix from `diag`.
    pub fn diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            assert!(d.is_finite(), "non-finite diagonal entry");
            m.data[i * n + i] = d;
        }
        m
    }

    /// Panics if `f` yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix::new(rows, cols, data).expect("Matrix::from_fn produced an invalid matrix")
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Result<Self> {
        Matrix::new(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Panics if `value` is not finite.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(value.is_finite(), "Matrix::set with non-finite value");
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "matmul",
                format!("lhs cols == rhs rows ({})", self.cols),
                format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            ));
        }
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Matrix::from_op("matmul", m, n, out)
    }

    fn zip_with(&self, rhs: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Matrix::from_op(op, self.rows, self.cols, data)
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// Entry-wise product.
    pub fn hadamard(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "hadamard", |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Matrix::from_op("map", self.rows, self.cols, data)
    }

    pub fn scale(&self, factor: f64) -> Result<Matrix> {
        self.map(|v| v * factor)
    }

    /// `self += factor * rhs`, used by the optimizer.
    pub fn axpy(&mut self, factor: f64, rhs: &Matrix) -> Result<()> {
        let updated = self.zip_with(rhs, "axpy", |a, b| a + factor * b)?;
        *self = updated;
        Ok(())
    }

    /// Square root of the sum of squared entries.
    ///
    /// Sums in column-major order so the result is bit-identical to the
    /// euclidean norm of [`Matrix::vectorize`].
    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.cols {
            for i in 0..self.rows {
                let v = self.get(i, j);
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    /// Column-stacking vectorization: a `(rows*cols) x 1` column vector.
    pub fn vectorize(&self) -> Matrix {
        Matrix {
            rows: self.rows * self.cols,
            cols: 1,
            data: self.transpose().data,
        }
    }

    /// Kronecker product with the default size cap.
    pub fn kronecker(&self, rhs: &Matrix) -> Result<Matrix> {
        self.kronecker_capped(rhs, DEFAULT_KRON_CAP)
    }

    /// Kronecker product `self ⊗ rhs`; rejects outputs with more than `cap`
    /// rows or columns.
    pub fn kronecker_capped(&self, rhs: &Matrix, cap: usize) -> Result<Matrix> {
        let rows = self.rows.checked_mul(rhs.rows);
        let cols = self.cols.checked_mul(rhs.cols);
        let (rows, cols) = match (rows, cols) {
            (Some(r), Some(c)) if r <= cap && c <= cap => (r, c),
            _ => {
                return Err(Error::shape(
                    "kronecker",
                    format!("output at most {cap}x{cap}"),
                    format!(
                        "{}x{} ⊗ {}x{}",
                        self.rows, self.cols, rhs.rows, rhs.cols
                    ),
                ))
            }
        };
        let mut out = vec![0.0; rows * cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                for p in 0..rhs.rows {
                    let base = (i * rhs.rows + p) * cols + j * rhs.cols;
                    for q in 0..rhs.cols {
                        out[base + q] = a * rhs.get(p, q);
                    }
                }
            }
        }
        Matrix::from_op("kronecker", rows, cols, out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entry-wise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, rhs: &Matrix) -> Option<f64> {
        (self.shape() == rhs.shape()).then(|| {
            self.data
                .iter()
                .zip(&rhs.data)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        })
    }

    /// Frobenius distance; `None` on shape mismatch.
    pub fn frobenius_distance(&self, rhs: &Matrix) -> Option<f64> {
        self.sub(rhs).ok().map(|d| d.frobenius_norm())
    }

    /// True when `|m_ij - m_ji| <= tol * max(1, max|m|)` for all entries.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self.get(i, j) - self.get(j, i)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("matrix", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_m_is_m() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.5]]);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn permutation_swaps_rows() {
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let v = Matrix::from_rows(&[[1.0], [2.0]]);
        assert_eq!(p.matmul(&v).unwrap(), Matrix::from_rows(&[[2.0], [1.0]]));
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { op: "matmul", .. })));
    }

    #[test]
    fn matmul_overflow_is_rejected() {
        let a = Matrix::from_rows(&[[1e200]]);
        assert_eq!(a.matmul(&a), Err(Error::NonFinite("matmul")));
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(Matrix::zeros(3, 2).frobenius_norm(), 0.0);
        assert_eq!(Matrix::from_rows(&[[3.0, 4.0]]).frobenius_norm(), 5.0);
    }

    #[test]
    fn vectorize_stacks_columns() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(m.vectorize().as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(m.vectorize().shape(), (4, 1));
        let col = Matrix::from_rows(&[[1.0], [5.0], [-2.0]]);
        assert_eq!(col.vectorize(), col);
    }

    #[test]
    fn kronecker_small_cases() {
        let b = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let k = Matrix::identity(2).kronecker(&b).unwrap();
        let expected = Matrix::from_rows(&[
            [1.0, 2.0, 0.0, 0.0],
            [3.0, 4.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 2.0],
            [0.0, 0.0, 3.0, 4.0],
        ]);
        assert_eq!(k, expected);
        let two = Matrix::from_rows(&[[2.0]]);
        assert_eq!(two.kronecker(&b).unwrap(), b.scale(2.0).unwrap());
    }

    #[test]
    fn kronecker_cap_is_enforced() {
        let a = Matrix::zeros(65, 1);
        let b = Matrix::zeros(64, 1);
        assert!(a.kronecker(&b).is_err());
        assert!(a.kronecker_capped(&Matrix::zeros(2, 2), 100).is_err());
        assert!(Matrix::zeros(4, 4).kronecker_capped(&Matrix::zeros(4, 4), 16).is_ok());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = Matrix::from_rows(&[[1.5, -2.0], [0.0, 3.25]]);
        let text = m.to_json();
        assert_eq!(text, r#"{"rows":2,"cols":2,"data":[1.5,-2.0,0.0,3.25]}"#);
        assert_eq!(Matrix::from_json(&text).unwrap(), m);
        assert!(Matrix::from_json(r#"{"rows":2,"cols":2,"data":[1,2,3]}"#).is_err());
        assert!(Matrix::from_json(r#"{"rows":0,"cols":2,"data":[]}"#).is_err());
        assert!(Matrix::from_json(r#"{"rows":1,"cols":1,"data":[1e999]}"#).is_err());
    }

    #[test]
    fn non_finite_construction_fails() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }
}
