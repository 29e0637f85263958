//! Block-pattern discovery: round-robin query sampling, stride-level
//! importance estimation, block aggregation, top-`tau` thresholding, and
//! static protection masks.
//!
//! The pipeline runs in three stages per head. First one query per stride of
//! `S` tokens is sampled, with the in-stride offset rotated by head index so
//! that all `S` offsets are covered across heads. Second, the sampled query
//! is dotted against per-stride key sums, giving an `N_s x N_s` importance
//! map for `N_s = ceil(L/S)` at cost `O(L^2/S^2)` instead of `O(L^2)`.
//! Third, softmax-normalized scores are pooled to block granularity and each
//! block row keeps the smallest prefix of top-scoring key blocks whose
//! cumulative share reaches `tau`, OR-ed with any requested static
//! protection. An anti-diagonal estimation baseline (per-tile sums along the
//! anti-diagonal, one strategy tag away) shares every stage after scoring.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::attention::{sparsity_of, AttentionError, BlockSelection, CostReport, HeadTensors};
use crate::numeric::{dot, BoolMatrix, Matrix, NumericError};

/// How the sampled query offset inside each stride is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Offset rotates with the head index (the default).
    HeadRoundRobin,
    /// Offset rotates with the layer index instead.
    LayerRoundRobin,
    /// Offset rotates with head index + layer index.
    HybridRoundRobin,
    /// Constant offset `S-1` for every head; the no-rotation ablation.
    Fixed,
    /// No sampling at all: per-tile anti-diagonal aggregation.
    AntiDiagonal,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::HeadRoundRobin,
        Strategy::LayerRoundRobin,
        Strategy::HybridRoundRobin,
        Strategy::Fixed,
        Strategy::AntiDiagonal,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Strategy::HeadRoundRobin => "head-rr",
            Strategy::LayerRoundRobin => "layer-rr",
            Strategy::HybridRoundRobin => "hybrid-rr",
            Strategy::Fixed => "fixed",
            Strategy::AntiDiagonal => "anti-diagonal",
        }
    }

    pub fn from_label(label: &str) -> Option<Strategy> {
        Strategy::ALL.iter().copied().find(|s| s.label() == label)
    }
}

/// Blocks kept unconditionally, independent of estimated importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProtectionModes {
    /// Keep every causal block in the last query-block row.
    pub last_q_block: bool,
    /// Keep the first key block for every query block.
    pub sink: bool,
    /// Keep the diagonal and its immediate predecessor in every row.
    pub recent: bool,
}

impl ProtectionModes {
    pub const NONE: ProtectionModes = ProtectionModes {
        last_q_block: false,
        sink: false,
        recent: false,
    };

    pub const LAST_Q_BLOCK: ProtectionModes = ProtectionModes {
        last_q_block: true,
        sink: false,
        recent: false,
    };

    pub fn any(&self) -> bool {
        self.last_q_block || self.sink || self.recent
    }
}

/// Parameters for one discovery run on one `(layer, head)` pair.
#[derive(Debug, Clone, Copy)]
pub struct DiscoveryConfig {
    /// Sampling stride `S` in tokens.
    pub stride: usize,
    /// Block size `B` in tokens; must be a multiple of `stride`.
    pub block_size: usize,
    /// Cumulative importance threshold in `(0, 1]`.
    pub tau: f64,
    pub strategy: Strategy,
    pub protection: ProtectionModes,
    pub head_index: usize,
    pub layer_index: usize,
    pub num_heads: usize,
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<(), DiscoveryError> {
        if self.stride == 0 {
            return Err(DiscoveryError::InvalidStride { stride: self.stride });
        }
        if self.block_size == 0 || self.block_size % self.stride != 0 {
            return Err(DiscoveryError::BlockNotMultipleOfStride {
                block_size: self.block_size,
                stride: self.stride,
            });
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(DiscoveryError::InvalidTau { tau: self.tau });
        }
        if self.num_heads == 0 {
            return Err(DiscoveryError::NoHeads);
        }
        Ok(())
    }

    /// Strides per block, `B/S`.
    pub fn strides_per_block(&self) -> usize {
        self.block_size / self.stride
    }

    pub fn tag(&self) -> String {
        format!("{}-s{}", self.strategy.label(), self.stride)
    }
}

/// Intermediate importance scores from one discovery run.
///
/// `raw` holds the `N_s x N_s` stride-level scores (non-causal cells carry
/// the exclusion sentinel), `normalized` their causal row softmax, and
/// `block_scores` the `N_b x N_b` tile sums of `normalized`.
#[derive(Debug, Clone)]
pub struct ImportanceMap {
    pub raw: Matrix,
    pub normalized: Matrix,
    pub block_scores: Matrix,
}

/// One block row's top-`tau` outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopTauRow {
    pub selected: Vec<bool>,
    /// True when the row total was zero and the diagonal block was kept as a
    /// fallback.
    pub used_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiscoveryError {
    InvalidStride {
        stride: usize,
    },
    BlockNotMultipleOfStride {
        block_size: usize,
        stride: usize,
    },
    InvalidTau {
        tau: f64,
    },
    NoHeads,
    /// The anti-diagonal strategy has no per-stride sampling schedule.
    NoSampledPositions,
    PositionCount {
        got: usize,
        expected: usize,
    },
    PositionOutOfRange {
        stride_index: usize,
        position: usize,
        seq_len: usize,
    },
    PositionOutsideStride {
        stride_index: usize,
        position: usize,
        stride: usize,
    },
    Numeric(NumericError),
    Selection(AttentionError),
}

impl fmt::Display for DiscoveryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiscoveryError::InvalidStride { stride } => write!(f, "stride {stride} must be >= 1"),
            DiscoveryError::BlockNotMultipleOfStride { block_size, stride } => {
                write!(f, "block size {block_size} is not a multiple of stride {stride}")
            }
            DiscoveryError::InvalidTau { tau } => write!(f, "tau {tau} outside (0, 1]"),
            DiscoveryError::NoHeads => write!(f, "num_heads must be >= 1"),
            DiscoveryError::NoSampledPositions => {
                write!(f, "anti-diagonal strategy does not sample query positions")
            }
            DiscoveryError::PositionCount { got, expected } => {
                write!(f, "got {got} sampled positions, expected {expected}")
            }
            DiscoveryError::PositionOutOfRange {
                stride_index,
                position,
                seq_len,
            } => write!(
                f,
                "sampled position {position} for stride {stride_index} outside sequence of length {seq_len}"
            ),
            DiscoveryError::PositionOutsideStride {
                stride_index,
                position,
                stride,
            } => write!(
                f,
                "sampled position {position} lies outside stride {stride_index} (stride size {stride})"
            ),
            DiscoveryError::Numeric(e) => write!(f, "{e}"),
            DiscoveryError::Selection(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for DiscoveryError {}

impl From<NumericError> for DiscoveryError {
    fn from(e: NumericError) -> Self {
        DiscoveryError::Numeric(e)
    }
}

/// Sampled query position for stride `stride_index` under rotation key
/// `key`: `i*S + (S - 1 - (key mod S))`. Not clamped to any sequence length.
#[inline]
pub fn sample_position(stride_index: usize, key: usize, stride: usize) -> usize {
    stride_index * stride + (stride - 1 - (key % stride))
}

/// One clamped sampled position per stride, `ceil(seq_len/stride)` in total.
///
/// The rotation key is the head index (head round-robin), the layer index
/// (layer round-robin), their sum (hybrid), or zero (fixed sampling, which
/// pins the offset at `S-1` for every head). Positions in the tail stride
/// are clamped to `seq_len - 1`.
pub fn sample_positions_for_strategy(
    cfg: &DiscoveryConfig,
    seq_len: usize,
) -> Result<Vec<usize>, DiscoveryError> {
    let key = match cfg.strategy {
        Strategy::HeadRoundRobin => cfg.head_index,
        Strategy::LayerRoundRobin => cfg.layer_index,
        Strategy::HybridRoundRobin => cfg.head_index + cfg.layer_index,
        Strategy::Fixed => 0,
        Strategy::AntiDiagonal => return Err(DiscoveryError::NoSampledPositions),
    };
    let n_s = seq_len.div_ceil(cfg.stride);
    Ok((0..n_s)
        .map(|i| sample_position(i, key, cfg.stride).min(seq_len - 1))
        .collect())
}

/// Stride-level importance: `raw[i][j] = q[p_i] . keysum(j) / (S * sqrt(d))`
/// for causal key strides `j <= floor(p_i / S)`; non-causal cells hold the
/// exclusion sentinel. Also returns the number of dot products executed.
///
/// Key sums over the tail stride cover only in-range keys while the
/// `1/(S*sqrt(d))` factor stays uniform, which mirrors zero-padding.
pub fn stride_importance(
    t: &HeadTensors,
    positions: &[usize],
    cfg: &DiscoveryConfig,
) -> Result<(Matrix, u64), DiscoveryError> {
    let l = t.seq_len();
    let d = t.head_dim();
    let s = cfg.stride;
    let n_s = l.div_ceil(s);
    if positions.len() != n_s {
        return Err(DiscoveryError::PositionCount {
            got: positions.len(),
            expected: n_s,
        });
    }
    for (i, &p) in positions.iter().enumerate() {
        if p >= l {
            return Err(DiscoveryError::PositionOutOfRange {
                stride_index: i,
                position: p,
                seq_len: l,
            });
        }
        if p / s != i {
            return Err(DiscoveryError::PositionOutsideStride {
                stride_index: i,
                position: p,
                stride: s,
            });
        }
    }

    let mut key_sums = Matrix::zeros(n_s, d);
    for j in 0..n_s {
        let row = key_sums.row_mut(j);
        for k in j * s..((j + 1) * s).min(l) {
            let krow = t.k.row(k);
            for c in 0..d {
                row[c] += krow[c];
            }
        }
    }

    let scale = 1.0 / (s as f64 * libm::sqrt(d as f64));
    let mut raw = Matrix::excluded(n_s, n_s);
    let mut ops = 0u64;
    for (i, &p) in positions.iter().enumerate() {
        let qrow = t.q.row(p);
        let limit = p / s;
        for j in 0..=limit {
            raw.set(i, j, (dot(qrow, key_sums.row(j)) as f64 * scale) as f32);
            ops += 1;
        }
    }
    Ok((raw, ops))
}

/// Anti-diagonal importance baseline: each causal `S x S` tile is scored by
/// the sum of logits along its anti-diagonal,
/// `raw[i][j] = sum_r q[iS+r] . k[jS+(S-1-r)] / (S * sqrt(d))` over in-range
/// index pairs. Tiles with no in-range pair (a short tail) score `0`.
pub fn anti_diagonal_importance(
    t: &HeadTensors,
    cfg: &DiscoveryConfig,
) -> Result<(Matrix, u64), DiscoveryError> {
    let l = t.seq_len();
    let d = t.head_dim();
    let s = cfg.stride;
    let n_s = l.div_ceil(s);
    let scale = 1.0 / (s as f64 * libm::sqrt(d as f64));
    let mut raw = Matrix::excluded(n_s, n_s);
    let mut ops = 0u64;
    for i in 0..n_s {
        for j in 0..=i {
            let mut acc = 0.0f32;
            for r in 0..s {
                let qi = i * s + r;
                let kj = j * s + (s - 1 - r);
                if qi < l && kj < l {
                    acc += dot(t.q.row(qi), t.k.row(kj));
                    ops += 1;
                }
            }
            raw.set(i, j, (acc as f64 * scale) as f32);
        }
    }
    Ok((raw, ops))
}

/// Causal row softmax of a raw importance map. Cells holding the exclusion
/// sentinel stay exactly `0`; every other row entry is normalized so the row
/// sums to 1.
pub fn normalize_importance(raw: &Matrix) -> Result<Matrix, DiscoveryError> {
    let (rows, cols) = raw.shape();
    let mut allowed = BoolMatrix::falses(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if raw.get(i, j).is_finite() {
                allowed.set(i, j, true);
            }
        }
    }
    Ok(crate::numeric::masked_row_softmax(raw, &allowed)?)
}

/// Pools normalized stride scores to block granularity:
/// `block_scores[m][n]` sums the `(B/S) x (B/S)` tile of stride pairs that
/// fall in block pair `(m, n)`. A full block row totals `B/S` since each
/// stride row sums to 1.
pub fn block_importance(normalized: &Matrix, cfg: &DiscoveryConfig) -> Matrix {
    let n_s = normalized.rows();
    let spb = cfg.strides_per_block();
    let n_b = n_s.div_ceil(spb);
    let mut acc = vec![0.0f64; n_b * n_b];
    for i in 0..n_s {
        let m = i / spb;
        for j in 0..n_s {
            // Non-causal cells are exactly 0 and contribute nothing.
            acc[m * n_b + j / spb] += normalized.get(i, j) as f64;
        }
    }
    let mut out = Matrix::zeros(n_b, n_b);
    for m in 0..n_b {
        for n in 0..n_b {
            out.set(m, n, acc[m * n_b + n] as f32);
        }
    }
    out
}

/// Top-`tau` selection for one block row: causal candidates `n <= m` are
/// sorted by score descending (ties to the smaller block index) and the
/// minimal prefix whose cumulative sum reaches `tau` times the causal row
/// total is kept. `tau = 1` keeps every causal block. A row with zero total
/// falls back to the diagonal block and is flagged.
pub fn select_top_tau(scores: &[f32], query_block: usize, tau: f64) -> TopTauRow {
    let m = query_block;
    debug_assert!(m < scores.len());
    let mut selected = vec![false; scores.len()];

    let mut total = 0.0f64;
    for &x in &scores[..=m] {
        total += x as f64;
    }
    if !(total > 0.0) || !total.is_finite() {
        selected[m] = true;
        return TopTauRow {
            selected,
            used_fallback: true,
        };
    }
    if tau >= 1.0 {
        for cell in selected.iter_mut().take(m + 1) {
            *cell = true;
        }
        return TopTauRow {
            selected,
            used_fallback: false,
        };
    }

    let mut order: Vec<usize> = (0..=m).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let threshold = tau * total;
    let mut cum = 0.0f64;
    for &n in &order {
        selected[n] = true;
        cum += scores[n] as f64;
        if cum >= threshold {
            break;
        }
    }
    TopTauRow {
        selected,
        used_fallback: false,
    }
}

/// Static protection mask over `num_blocks x num_blocks` block pairs.
pub fn static_protection(num_blocks: usize, modes: ProtectionModes) -> BoolMatrix {
    let n_b = num_blocks;
    let mut mask = BoolMatrix::falses(n_b, n_b);
    if modes.last_q_block {
        for n in 0..n_b {
            mask.set(n_b - 1, n, true);
        }
    }
    if modes.sink {
        for m in 0..n_b {
            mask.set(m, 0, true);
        }
    }
    if modes.recent {
        for m in 0..n_b {
            mask.set(m, m, true);
            if m > 0 {
                mask.set(m, m - 1, true);
            }
        }
    }
    mask
}

/// Runs the whole discovery pipeline for one `(layer, head)` pair:
/// sampling (or anti-diagonal scoring), normalization, block pooling,
/// per-row top-`tau` selection, and the static-protection OR.
///
/// `search_ops` in the returned report counts the `head_dim`-wide dot
/// products spent on estimation; `logit_ops` stays 0 here since no attention
/// has been computed yet.
pub fn discover(
    t: &HeadTensors,
    cfg: &DiscoveryConfig,
) -> Result<(BlockSelection, ImportanceMap, CostReport), DiscoveryError> {
    cfg.validate()?;
    let l = t.seq_len();

    let (raw, search_ops) = match cfg.strategy {
        Strategy::AntiDiagonal => anti_diagonal_importance(t, cfg)?,
        _ => {
            let positions = sample_positions_for_strategy(cfg, l)?;
            stride_importance(t, &positions, cfg)?
        }
    };
    let normalized = normalize_importance(&raw)?;
    let block_scores = block_importance(&normalized, cfg);

    let n_b = block_scores.rows();
    let mut blocks = BoolMatrix::falses(n_b, n_b);
    for m in 0..n_b {
        let row = select_top_tau(block_scores.row(m), m, cfg.tau);
        for n in 0..=m {
            if row.selected[n] {
                blocks.set(m, n, true);
            }
        }
    }
    if cfg.protection.any() {
        blocks.or_assign(&static_protection(n_b, cfg.protection));
    }

    let selection = BlockSelection::new(blocks, cfg.block_size, l, cfg.tag(), cfg.tau)
        .map_err(DiscoveryError::Selection)?;
    let cost = CostReport {
        logit_ops: 0,
        search_ops,
        sparsity: sparsity_of(&selection),
    };
    Ok((
        selection,
        ImportanceMap {
            raw,
            normalized,
            block_scores,
        },
        cost,
    ))
}
