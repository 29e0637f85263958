//! Dense numeric substrate: row-major `f32` matrices, a masked row softmax,
//! and Frobenius norms.
//!
//! Reductions accumulate in `f64` (softmax denominators, norm sums) while
//! matrix storage stays `f32`. All loops are sequential in a fixed order, so
//! results are deterministic no matter how callers parallelize around them.

use alloc::{vec, vec::Vec};
use core::fmt;

/// Sentinel stored in cells that a masked operation excluded from its domain.
///
/// `exp(EXCLUDED - max) == 0` for any finite max, so excluded cells carry no
/// probability mass even when a computation forgets to skip them.
pub const EXCLUDED: f32 = f32::NEG_INFINITY;

/// Row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Matrix with every cell set to [`EXCLUDED`].
    pub fn excluded(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![EXCLUDED; rows * cols],
        }
    }

    /// Wraps an existing row-major buffer. Panics if the length is not
    /// `rows * cols`; that is a caller bug, not an input condition.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length mismatch");
        Self { rows, cols, data }
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f32) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Row-major boolean matrix; `true` means a cell is selected/allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BoolMatrix {
    pub fn falses(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), rows * cols, "mask buffer length mismatch");
        Self { rows, cols, data }
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Element-wise OR with another mask of the same shape.
    pub fn or_assign(&mut self, other: &BoolMatrix) {
        assert_eq!(self.shape(), other.shape(), "mask shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a |= *b;
        }
    }

    /// True when every selected cell of `self` is also selected in `other`.
    pub fn is_subset_of(&self, other: &BoolMatrix) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(&a, &b)| !a || b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NumericError {
    /// Operand shapes are incompatible with the operation.
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A softmax row had no allowed entries (or no finite allowed entries).
    DegenerateRow { row: usize },
}

impl fmt::Display for NumericError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericError::ShapeMismatch { left, right } => write!(
                f,
                "shape mismatch: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            NumericError::DegenerateRow { row } => {
                write!(f, "row {row} has no allowed entries")
            }
        }
    }
}

impl core::error::Error for NumericError {}

/// Sequential `f32` dot product. Every matrix product in the crate goes
/// through this one loop so that identical operands give identical bits.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for k in 0..a.len() {
        acc += a[k] * b[k];
    }
    acc
}

/// `out[i][j] = sum_k a[i][k] * b[j][k]`, i.e. `A * B^T`.
///
/// Attention logits are `Q * K^T`, so the second operand is taken row-wise.
pub fn matmul_transposed(a: &Matrix, b: &Matrix) -> Result<Matrix, NumericError> {
    if a.cols != b.cols {
        return Err(NumericError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ai = a.row(i);
        for j in 0..b.rows {
            out.set(i, j, dot(ai, b.row(j)));
        }
    }
    Ok(out)
}

/// Row softmax restricted to `allowed` cells; disallowed cells come out as
/// exactly `0.0`.
///
/// Masked cells are excluded from the softmax domain entirely (the same
/// effect as additive `-inf` masking), so no probability mass leaks through
/// skipped cells. Each row is max-shifted and its denominator accumulated in
/// `f64`; a row with no allowed entry, or whose allowed entries are all
/// `-inf`, is reported as degenerate.
pub fn masked_row_softmax(logits: &Matrix, allowed: &BoolMatrix) -> Result<Matrix, NumericError> {
    if logits.shape() != allowed.shape() {
        return Err(NumericError::ShapeMismatch {
            left: logits.shape(),
            right: allowed.shape(),
        });
    }
    let mut out = Matrix::zeros(logits.rows, logits.cols);
    let mut exps = vec![0.0f64; logits.cols];
    for i in 0..logits.rows {
        let lrow = logits.row(i);
        let arow = allowed.row(i);
        let mut max = f32::NEG_INFINITY;
        let mut any = false;
        for j in 0..lrow.len() {
            if arow[j] {
                any = true;
                if lrow[j] > max {
                    max = lrow[j];
                }
            }
        }
        if !any || max == f32::NEG_INFINITY {
            return Err(NumericError::DegenerateRow { row: i });
        }
        let mut denom = 0.0f64;
        for j in 0..lrow.len() {
            if arow[j] {
                let e = libm::exp((lrow[j] - max) as f64);
                exps[j] = e;
                denom += e;
            }
        }
        let orow = out.row_mut(i);
        for j in 0..lrow.len() {
            if arow[j] {
                orow[j] = (exps[j] / denom) as f32;
            }
        }
    }
    Ok(out)
}

/// Frobenius norm of `a - b`, accumulated in `f64`.
pub fn frobenius_diff(a: &Matrix, b: &Matrix) -> Result<f64, NumericError> {
    if a.shape() != b.shape() {
        return Err(NumericError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut acc = 0.0f64;
    for (&x, &y) in a.data.iter().zip(b.data.iter()) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    Ok(libm::sqrt(acc))
}

/// Frobenius norm of a single matrix.
pub fn frobenius_norm(a: &Matrix) -> f64 {
    let mut acc = 0.0f64;
    for &x in a.data.iter() {
        acc += x as f64 * x as f64;
    }
    libm::sqrt(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn gauss_ish(rng: &mut ChaCha8Rng) -> f32 {
        // Uniform in [-2, 2); plenty for oracle comparisons.
        ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0) as f32
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| gauss_ish(rng)).collect();
        Matrix::from_vec(rows, cols, data)
    }

    #[test]
    fn matmul_identity() {
        let eye = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let out = matmul_transposed(&eye, &eye).unwrap();
        assert_eq!(out, eye);
    }

    #[test]
    fn matmul_single_cell() {
        let a = Matrix::from_vec(1, 2, vec![1.0, 2.0]);
        let b = Matrix::from_vec(1, 2, vec![3.0, 4.0]);
        let out = matmul_transposed(&a, &b).unwrap();
        assert_eq!(out.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 8, 4);
        let b = random_matrix(&mut rng, 8, 4);
        let out = matmul_transposed(&a, &b).unwrap();
        // Same accumulation order as the implementation: exact equality.
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = 0.0f32;
                for k in 0..4 {
                    acc += a.get(i, k) * b.get(j, k);
                }
                assert_eq!(out.get(i, j), acc, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 4);
        assert!(matches!(
            matmul_transposed(&a, &b),
            Err(NumericError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn softmax_symmetric_row() {
        let logits = Matrix::from_vec(1, 2, vec![0.0, 0.0]);
        let allowed = BoolMatrix::from_vec(1, 2, vec![true, true]);
        let out = masked_row_softmax(&logits, &allowed).unwrap();
        assert_eq!(out.get(0, 0), 0.5);
        assert_eq!(out.get(0, 1), 0.5);
    }

    #[test]
    fn softmax_single_allowed_entry() {
        let logits = Matrix::from_vec(1, 2, vec![5.0, 100.0]);
        let allowed = BoolMatrix::from_vec(1, 2, vec![true, false]);
        let out = masked_row_softmax(&logits, &allowed).unwrap();
        assert_eq!(out.get(0, 0), 1.0);
        assert_eq!(out.get(0, 1), 0.0);
    }

    #[test]
    fn softmax_matches_f64_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = random_matrix(&mut rng, 16, 16);
        let mut mask = BoolMatrix::falses(16, 16);
        for i in 0..16 {
            let mut any = false;
            for j in 0..16 {
                let b = rng.next_u64() % 2 == 0;
                mask.set(i, j, b);
                any |= b;
            }
            if !any {
                mask.set(i, i, true);
            }
        }
        let out = masked_row_softmax(&logits, &mask).unwrap();
        // Independent reference: plain exp/sum in f64 without max shifting.
        for i in 0..16 {
            let mut denom = 0.0f64;
            for j in 0..16 {
                if mask.get(i, j) {
                    denom += libm::exp(logits.get(i, j) as f64);
                }
            }
            for j in 0..16 {
                let want = if mask.get(i, j) {
                    libm::exp(logits.get(i, j) as f64) / denom
                } else {
                    0.0
                };
                assert!(
                    (out.get(i, j) as f64 - want).abs() <= 1e-6,
                    "({i},{j}): got {} want {want}",
                    out.get(i, j)
                );
            }
        }
    }

    #[test]
    fn softmax_degenerate_row() {
        let logits = Matrix::zeros(2, 2);
        let mut mask = BoolMatrix::falses(2, 2);
        mask.set(0, 0, true);
        assert_eq!(
            masked_row_softmax(&logits, &mask),
            Err(NumericError::DegenerateRow { row: 1 })
        );
    }

    #[test]
    fn softmax_all_excluded_row_is_degenerate() {
        let logits = Matrix::excluded(1, 2);
        let allowed = BoolMatrix::from_vec(1, 2, vec![true, true]);
        assert_eq!(
            masked_row_softmax(&logits, &allowed),
            Err(NumericError::DegenerateRow { row: 0 })
        );
    }

    #[test]
    fn frobenius_identical_and_345() {
        let a = Matrix::from_vec(1, 2, vec![3.0, 4.0]);
        assert_eq!(frobenius_diff(&a, &a).unwrap(), 0.0);
        let zero = Matrix::zeros(1, 2);
        assert_eq!(frobenius_diff(&a, &zero).unwrap(), 5.0);
        assert_eq!(frobenius_norm(&a), 5.0);
    }

    #[test]
    fn frobenius_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_matrix(&mut rng, 10, 10);
        let b = random_matrix(&mut rng, 10, 10);
        let got = frobenius_diff(&a, &b).unwrap();
        let mut acc = 0.0f64;
        for i in 0..10 {
            for j in 0..10 {
                let d = (a.get(i, j) - b.get(i, j)) as f64;
                acc += d * d;
            }
        }
        let want = acc.sqrt();
        assert!((got - want).abs() <= 1e-6 * want.max(1.0));
    }
}
