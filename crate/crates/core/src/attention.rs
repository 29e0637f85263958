//! Reference causal attention, block-mask expansion, block-sparse attention,
//! and the error/sparsity metrics used to judge a block selection.
//!
//! Full attention is the sparse path run with the all-causal selection, so
//! the two agree bit-for-bit by construction and every tolerance in the test
//! suite measures mask quality rather than kernel drift.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::numeric::{dot, BoolMatrix, Matrix, NumericError};

/// Per-head query/key/value tensors, each `seq_len x head_dim`.
#[derive(Debug, Clone)]
pub struct HeadTensors {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
}

impl HeadTensors {
    pub fn new(q: Matrix, k: Matrix, v: Matrix) -> Result<Self, AttentionError> {
        if q.shape() != k.shape() || q.shape() != v.shape() {
            return Err(AttentionError::TensorShapeMismatch {
                q: q.shape(),
                k: k.shape(),
                v: v.shape(),
            });
        }
        if q.rows() == 0 || q.cols() == 0 {
            return Err(AttentionError::EmptyTensor);
        }
        Ok(Self { q, k, v })
    }

    pub fn seq_len(&self) -> usize {
        self.q.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.q.cols()
    }
}

/// Number of block rows/cols covering `seq_len` tokens in blocks of
/// `block_size` (the last block may be partial).
pub fn block_count(seq_len: usize, block_size: usize) -> usize {
    seq_len.div_ceil(block_size)
}

/// A boolean block mask plus the provenance of how it was chosen.
///
/// Invariants enforced at construction: the mask is `N_b x N_b` with
/// `N_b = ceil(seq_len / block_size)`, no block above the diagonal is
/// selected, and every block row selects at least one causal block (which
/// guarantees every query token keeps at least one key).
#[derive(Debug, Clone)]
pub struct BlockSelection {
    blocks: BoolMatrix,
    block_size: usize,
    seq_len: usize,
    strategy_tag: String,
    tau: f64,
}

impl BlockSelection {
    pub fn new(
        blocks: BoolMatrix,
        block_size: usize,
        seq_len: usize,
        strategy_tag: String,
        tau: f64,
    ) -> Result<Self, AttentionError> {
        if block_size == 0 || seq_len == 0 {
            return Err(AttentionError::EmptyTensor);
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(AttentionError::InvalidTau { tau });
        }
        let n_b = block_count(seq_len, block_size);
        if blocks.shape() != (n_b, n_b) {
            return Err(AttentionError::SelectionShapeMismatch {
                got: blocks.shape(),
                expected: n_b,
            });
        }
        for m in 0..n_b {
            for n in (m + 1)..n_b {
                if blocks.get(m, n) {
                    return Err(AttentionError::NonCausalBlock { row: m, col: n });
                }
            }
            if !(0..=m).any(|n| blocks.get(m, n)) {
                return Err(AttentionError::EmptyBlockRow { row: m });
            }
        }
        Ok(Self {
            blocks,
            block_size,
            seq_len,
            strategy_tag,
            tau,
        })
    }

    /// Selection with every causal block enabled; equivalent to full
    /// attention when fed to [`sparse_attention`].
    pub fn all_causal(seq_len: usize, block_size: usize, strategy_tag: &str) -> Self {
        let n_b = block_count(seq_len, block_size);
        let mut blocks = BoolMatrix::falses(n_b, n_b);
        for m in 0..n_b {
            for n in 0..=m {
                blocks.set(m, n, true);
            }
        }
        Self {
            blocks,
            block_size,
            seq_len,
            strategy_tag: String::from(strategy_tag),
            tau: 1.0,
        }
    }

    pub fn blocks(&self) -> &BoolMatrix {
        &self.blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.rows()
    }

    pub fn strategy_tag(&self) -> &str {
        &self.strategy_tag
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Raw counts behind [`sparsity_of`], for callers that want a different
    /// denominator convention.
    pub fn selected_causal_pairs(&self) -> usize {
        // Upper triangle is all false by construction.
        self.blocks.count_true()
    }

    pub fn total_causal_pairs(&self) -> usize {
        let n_b = self.blocks.rows();
        n_b * (n_b + 1) / 2
    }
}

/// Instrumented operation counts for one discovery + attention pass.
///
/// `logit_ops` counts query/key dot products executed by the attention
/// itself; `search_ops` counts `head_dim`-wide dot products executed while
/// estimating importance during pattern discovery. `sparsity` is the
/// fraction of causal block pairs skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub logit_ops: u64,
    pub search_ops: u64,
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttentionError {
    TensorShapeMismatch {
        q: (usize, usize),
        k: (usize, usize),
        v: (usize, usize),
    },
    EmptyTensor,
    SelectionShapeMismatch {
        got: (usize, usize),
        expected: usize,
    },
    NonCausalBlock {
        row: usize,
        col: usize,
    },
    EmptyBlockRow {
        row: usize,
    },
    InvalidTau {
        tau: f64,
    },
    SeqLenMismatch {
        tensors: usize,
        selection: usize,
    },
    /// A query row ended up with no allowed key.
    DegenerateQuery {
        query: usize,
    },
    Numeric(NumericError),
}

impl fmt::Display for AttentionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionError::TensorShapeMismatch { q, k, v } => write!(
                f,
                "q/k/v shapes disagree: {}x{}, {}x{}, {}x{}",
                q.0, q.1, k.0, k.1, v.0, v.1
            ),
            AttentionError::EmptyTensor => write!(f, "tensors must be at least 1x1"),
            AttentionError::SelectionShapeMismatch { got, expected } => write!(
                f,
                "block mask is {}x{}, expected {expected}x{expected}",
                got.0, got.1
            ),
            AttentionError::NonCausalBlock { row, col } => {
                write!(f, "block ({row},{col}) above the diagonal is selected")
            }
            AttentionError::EmptyBlockRow { row } => {
                write!(f, "block row {row} selects no causal block")
            }
            AttentionError::InvalidTau { tau } => write!(f, "tau {tau} outside (0, 1]"),
            AttentionError::SeqLenMismatch { tensors, selection } => write!(
                f,
                "selection built for seq_len {selection} applied to tensors of seq_len {tensors}"
            ),
            AttentionError::DegenerateQuery { query } => {
                write!(f, "query {query} has no allowed key")
            }
            AttentionError::Numeric(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for AttentionError {}

impl From<NumericError> for AttentionError {
    fn from(e: NumericError) -> Self {
        AttentionError::Numeric(e)
    }
}

/// Token-level mask implied by a block selection: `(i, j)` is allowed iff
/// the enclosing block pair is selected and `j <= i`.
pub fn expand_block_mask(sel: &BlockSelection) -> BoolMatrix {
    let l = sel.seq_len();
    let b = sel.block_size();
    let mut mask = BoolMatrix::falses(l, l);
    for i in 0..l {
        for j in 0..=i {
            if sel.blocks.get(i / b, j / b) {
                mask.set(i, j, true);
            }
        }
    }
    mask
}

/// Scaled causal logit matrix `Q K^T / sqrt(d)` with non-causal cells set to
/// [`EXCLUDED`]. Shared by the selection oracle and the stride-1 estimation
/// path so both see identical bits.
pub fn causal_scaled_logits(t: &HeadTensors) -> Matrix {
    let l = t.seq_len();
    let scale = 1.0 / libm::sqrt(t.head_dim() as f64);
    let mut out = Matrix::excluded(l, l);
    for i in 0..l {
        let qi = t.q.row(i);
        for j in 0..=i {
            out.set(i, j, (dot(qi, t.k.row(j)) as f64 * scale) as f32);
        }
    }
    out
}

/// Full causal attention probabilities (softmax rows, zero above diagonal).
pub fn causal_attention_probs(t: &HeadTensors) -> Result<Matrix, AttentionError> {
    let l = t.seq_len();
    let logits = causal_scaled_logits(t);
    let mut causal = BoolMatrix::falses(l, l);
    for i in 0..l {
        for j in 0..=i {
            causal.set(i, j, true);
        }
    }
    Ok(crate::numeric::masked_row_softmax(&logits, &causal)?)
}

fn attend(t: &HeadTensors, sel: &BlockSelection) -> Result<(Matrix, CostReport), AttentionError> {
    if sel.seq_len() != t.seq_len() {
        return Err(AttentionError::SeqLenMismatch {
            tensors: t.seq_len(),
            selection: sel.seq_len(),
        });
    }
    let l = t.seq_len();
    let d = t.head_dim();
    let b = sel.block_size();
    let scale = 1.0 / libm::sqrt(d as f64);
    let mut out = Matrix::zeros(l, d);
    let mut acc = Vec::with_capacity(d);
    let mut keys: Vec<usize> = Vec::new();
    let mut logits: Vec<f32> = Vec::new();
    let mut logit_ops = 0u64;

    for i in 0..l {
        let qb = i / b;
        keys.clear();
        logits.clear();
        let qi = t.q.row(i);
        for j in 0..=i {
            if sel.blocks.get(qb, j / b) {
                keys.push(j);
                logits.push((dot(qi, t.k.row(j)) as f64 * scale) as f32);
            }
        }
        if keys.is_empty() {
            return Err(AttentionError::DegenerateQuery { query: i });
        }
        logit_ops += keys.len() as u64;

        let mut max = f32::NEG_INFINITY;
        for &x in logits.iter() {
            if x > max {
                max = x;
            }
        }
        let mut denom = 0.0f64;
        let mut weights: Vec<f64> = Vec::with_capacity(keys.len());
        for &x in logits.iter() {
            let e = libm::exp((x - max) as f64);
            weights.push(e);
            denom += e;
        }

        acc.clear();
        acc.resize(d, 0.0f64);
        for (idx, &j) in keys.iter().enumerate() {
            let w = weights[idx] / denom;
            let vj = t.v.row(j);
            for c in 0..d {
                acc[c] += w * vj[c] as f64;
            }
        }
        let orow = out.row_mut(i);
        for c in 0..d {
            orow[c] = acc[c] as f32;
        }
    }

    let report = CostReport {
        logit_ops,
        search_ops: 0,
        sparsity: sparsity_of(sel),
    };
    Ok((out, report))
}

/// Reference causal full attention: `softmax(Q K^T / sqrt(d)) V` over
/// `j <= i`. Runs the sparse path with the all-causal selection.
pub fn full_attention(t: &HeadTensors) -> Result<Matrix, AttentionError> {
    let sel = BlockSelection::all_causal(t.seq_len(), t.seq_len(), "full");
    let (out, _) = attend(t, &sel)?;
    Ok(out)
}

/// Block-sparse causal attention under `sel`, with per-cell op accounting.
///
/// Logits are computed only inside selected blocks; each query row is
/// softmaxed over its allowed keys exactly as the full path would be.
pub fn sparse_attention(
    t: &HeadTensors,
    sel: &BlockSelection,
) -> Result<(Matrix, CostReport), AttentionError> {
    attend(t, sel)
}

/// Frobenius norm of the difference between two attention outputs.
pub fn approximation_error(full_out: &Matrix, sparse_out: &Matrix) -> Result<f64, AttentionError> {
    Ok(crate::numeric::frobenius_diff(full_out, sparse_out)?)
}

/// Fraction of causal block pairs skipped: `1 - selected / (N_b(N_b+1)/2)`.
///
/// Only causal pairs count; the upper triangle is forced empty and never
/// represents work.
pub fn sparsity_of(sel: &BlockSelection) -> f64 {
    1.0 - sel.selected_causal_pairs() as f64 / sel.total_causal_pairs() as f64
}
