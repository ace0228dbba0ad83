//! Dense row-major matrices over `f64`.
//!
//! This is deliberately the smallest linear-algebra surface the rest of the
//! crate needs: multiply, entrywise combine, transpose, scale, squared row
//! norms, and a few indexing helpers. No views, no broadcasting, no sparse
//! storage. Everything is 64-bit because the gradient checks downstream need
//! ~1e-6 relative agreement between analytic and finite-difference gradients,
//! which single precision cannot deliver.
//!
//! All operations take their inputs by reference and return fresh matrices;
//! inputs are never mutated.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense 2-D array of `f64`, row-major, at least 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Entrywise binary operations understood by [`Matrix::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
}

/// Work threshold (in multiply-adds) below which `matmul` stays on one
/// thread; splitting tiny products across the pool costs more than it saves.
const PAR_MATMUL_THRESHOLD: usize = 1 << 15;

impl Matrix {
    /// Builds a matrix from a flat row-major buffer.
    ///
    /// Rejects empty shapes, length mismatches, and non-finite entries, so a
    /// constructed `Matrix` always satisfies the type's invariants.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "matrix shape {rows}x{cols} must have at least one row and one column"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Parameter(format!(
                "matrix shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix constructor".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix shape must be at least 1x1");
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

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Parameter("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parameter("rows have unequal lengths".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Standard matrix product. Requires `self.cols == other.rows`.
    ///
    /// Large products are split across threads by output row; each row is
    /// still accumulated in a fixed order, so results are bit-identical
    /// regardless of thread count.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dimension("matmul", self.shape(), other.shape()));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        let work = self.rows * self.cols * other.cols;
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (k, &a_ik) in a_row.iter().enumerate() {
                // Exact zeros contribute nothing; blank pixels and relu
                // activations make them frequent enough to skip.
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b;
                }
            }
        };
        if work >= PAR_MATMUL_THRESHOLD {
            out.par_chunks_mut(other.cols).enumerate().for_each(kernel);
        } else {
            out.chunks_mut(other.cols).enumerate().for_each(kernel);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    /// `self . other + bias` with the bias row added to every output row in
    /// the same kernel pass.
    pub fn affine(&self, other: &Matrix, bias: &[f64]) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dimension("affine", self.shape(), other.shape()));
        }
        if bias.len() != other.cols {
            return Err(Error::dimension(
                "affine bias",
                other.shape(),
                (1, bias.len()),
            ));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        let work = self.rows * self.cols * other.cols;
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b;
                }
            }
            // Bias joins last, matching `matmul` + `add_row_vector` exactly.
            for (o, &b) in out_row.iter_mut().zip(bias) {
                *o += b;
            }
        };
        if work >= PAR_MATMUL_THRESHOLD {
            out.par_chunks_mut(other.cols).enumerate().for_each(kernel);
        } else {
            out.chunks_mut(other.cols).enumerate().for_each(kernel);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    /// `self . other^T` without materializing the transpose; entry `(i, j)`
    /// is the dot product of row `i` of `self` and row `j` of `other`, so
    /// both operands stream contiguously.
    pub fn matmul_transpose_right(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dimension(
                "matmul_transpose_right",
                self.shape(),
                other.shape(),
            ));
        }
        let mut out = vec![0.0; self.rows * other.rows];
        let work = self.rows * self.cols * other.rows;
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (j, o) in out_row.iter_mut().enumerate() {
                let b_row = &other.data[j * other.cols..(j + 1) * other.cols];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                *o = acc;
            }
        };
        if work >= PAR_MATMUL_THRESHOLD {
            out.par_chunks_mut(other.rows).enumerate().for_each(kernel);
        } else {
            out.chunks_mut(other.rows).enumerate().for_each(kernel);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.rows,
            data: out,
        })
    }

    /// `self^T . other` without materializing the transpose. Output row `j`
    /// accumulates `self[i][j] * other.row(i)` over `i` in fixed order, so
    /// parallelizing over output rows stays bit-deterministic.
    pub fn matmul_transpose_left(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dimension(
                "matmul_transpose_left",
                self.shape(),
                other.shape(),
            ));
        }
        let mut out = vec![0.0; self.cols * other.cols];
        let work = self.rows * self.cols * other.cols;
        let kernel = |(j, out_row): (usize, &mut [f64])| {
            for i in 0..self.rows {
                let a_ij = self.data[i * self.cols + j];
                if a_ij == 0.0 {
                    continue;
                }
                let b_row = &other.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ij * b;
                }
            }
        };
        if work >= PAR_MATMUL_THRESHOLD {
            out.par_chunks_mut(other.cols).enumerate().for_each(kernel);
        } else {
            out.chunks_mut(other.cols).enumerate().for_each(kernel);
        }
        Ok(Matrix {
            rows: self.cols,
            cols: other.cols,
            data: out,
        })
    }

    /// Entrywise combination of two equally shaped matrices.
    pub fn elementwise(&self, other: &Matrix, op: ElemOp) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dimension("elementwise", self.shape(), other.shape()));
        }
        let f: fn(f64, f64) -> f64 = match op {
            ElemOp::Add => |a, b| a + b,
            ElemOp::Sub => |a, b| a - b,
            ElemOp::Mul => |a, b| a * b,
        };
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.elementwise(other, ElemOp::Add)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.elementwise(other, ElemOp::Sub)
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.elementwise(other, ElemOp::Mul)
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    /// Squared Euclidean norm of each row.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|&v| v * v).sum())
            .collect()
    }

    /// Column sums as a `1 x cols` matrix.
    pub fn col_sums(&self) -> Matrix {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        Matrix {
            rows: 1,
            cols: self.cols,
            data: sums,
        }
    }

    /// Adds the same row vector to every row. Used for bias terms.
    pub fn add_row_vector(&self, v: &[f64]) -> Result<Matrix> {
        if v.len() != self.cols {
            return Err(Error::dimension("add_row_vector", self.shape(), (1, v.len())));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(v) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entrywise difference; matrices must share a shape.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::dimension(
                "max_abs_diff",
                self.shape(),
                other.shape(),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_is_a_no_op() {
        let a = mat(&[vec![3.0, 4.0], vec![5.0, 6.0]]);
        let out = Matrix::identity(2).matmul(&a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_matches_hand_arithmetic() {
        let a = mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = mat(&[vec![5.0], vec![6.0]]);
        let out = a.matmul(&b).unwrap();
        assert_eq!(out, mat(&[vec![17.0], vec![39.0]]));
    }

    #[test]
    fn matmul_rejects_mismatched_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x2"), "got: {msg}");
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        // Brute-force oracle over a product big enough to take the parallel
        // path, so both code paths are checked against the definition.
        let mut rng = crate::rng::SeededRng::new(7);
        let a = rng.gaussian_matrix(37, 23, 0.0, 1.0).unwrap();
        let b = rng.gaussian_matrix(23, 41, 0.0, 1.0).unwrap();
        let fast = a.matmul(&b).unwrap();
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                assert!(
                    (fast.get(i, j) - acc).abs() < 1e-12,
                    "mismatch at ({i},{j}): {} vs {acc}",
                    fast.get(i, j)
                );
            }
        }
    }

    #[test]
    fn transpose_free_products_match_their_explicit_forms() {
        let mut rng = crate::rng::SeededRng::new(21);
        let a = rng.gaussian_matrix(9, 13, 0.0, 1.0).unwrap();
        let b = rng.gaussian_matrix(7, 13, 0.0, 1.0).unwrap();
        let c = rng.gaussian_matrix(9, 5, 0.0, 1.0).unwrap();
        // Same accumulation order, so the results are identical bit for bit.
        assert_eq!(
            a.matmul_transpose_right(&b).unwrap(),
            a.matmul(&b.transpose()).unwrap()
        );
        assert_eq!(
            a.matmul_transpose_left(&c).unwrap(),
            a.transpose().matmul(&c).unwrap()
        );
        assert!(a.matmul_transpose_right(&c).is_err());
        assert!(a.matmul_transpose_left(&b).is_err());
    }

    #[test]
    fn affine_matches_matmul_plus_bias() {
        let mut rng = crate::rng::SeededRng::new(22);
        let a = rng.gaussian_matrix(6, 4, 0.0, 1.0).unwrap();
        let w = rng.gaussian_matrix(4, 3, 0.0, 1.0).unwrap();
        let bias = [0.5, -1.0, 2.0];
        let fused = a.affine(&w, &bias).unwrap();
        let explicit = a.matmul(&w).unwrap().add_row_vector(&bias).unwrap();
        assert_eq!(fused, explicit);
        assert!(a.affine(&w, &[1.0]).is_err());
    }

    #[test]
    fn elementwise_identities() {
        let a = mat(&[vec![1.0, -2.0], vec![0.5, 3.0]]);
        let zeros = Matrix::zeros(2, 2);
        assert_eq!(a.add(&zeros).unwrap(), a);
        assert_eq!(a.sub(&a).unwrap(), zeros);
    }

    #[test]
    fn elementwise_mul_matches_hand_arithmetic() {
        let a = mat(&[vec![2.0, 3.0]]);
        let b = mat(&[vec![4.0, 5.0]]);
        assert_eq!(a.hadamard(&b).unwrap(), mat(&[vec![8.0, 15.0]]));
    }

    #[test]
    fn elementwise_rejects_mismatched_shapes() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::zeros(2, 3);
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn transpose_is_an_involution() {
        let mut rng = crate::rng::SeededRng::new(3);
        let a = rng.gaussian_matrix(5, 8, 0.0, 1.0).unwrap();
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn scale_by_zero_and_one() {
        let a = mat(&[vec![1.0, -4.0]]);
        assert_eq!(a.scale(0.0), Matrix::zeros(1, 2));
        assert_eq!(a.scale(1.0), a);
    }

    #[test]
    fn row_norms_sq_matches_hand_arithmetic() {
        let a = mat(&[vec![3.0, 4.0]]);
        assert_eq!(a.row_norms_sq(), vec![25.0]);
    }

    #[test]
    fn operations_do_not_mutate_inputs() {
        let a = mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = mat(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let (a0, b0) = (a.clone(), b.clone());
        let _ = a.matmul(&b).unwrap();
        let _ = a.add(&b).unwrap();
        let _ = a.transpose();
        let _ = a.scale(2.0);
        let _ = a.row_norms_sq();
        assert_eq!(a, a0);
        assert_eq!(b, b0);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn col_sums_and_add_row_vector() {
        let a = mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(a.col_sums(), mat(&[vec![4.0, 6.0]]));
        let shifted = a.add_row_vector(&[10.0, 20.0]).unwrap();
        assert_eq!(shifted, mat(&[vec![11.0, 22.0], vec![13.0, 24.0]]));
        assert!(a.add_row_vector(&[1.0]).is_err());
    }
}
