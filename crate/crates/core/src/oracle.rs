//! Ground-truth important-key sets and selection scoring.
//!
//! The ground truth for query `i` is the minimal set of causal keys whose
//! full-attention probability mass reaches `tau_star` (keys sorted by
//! descending attention score, ties to the smaller index -- the same rule
//! the top-`tau` selector uses). A predicted block selection is scored by
//! per-query precision and recall against these sets, averaged over queries,
//! with F1 computed from the averaged precision and recall.

use alloc::vec::Vec;
use core::fmt;

use crate::attention::{causal_attention_probs, AttentionError, BlockSelection, HeadTensors};
use crate::numeric::{BoolMatrix, Matrix};

/// Per-query ground-truth key sets at threshold `tau_star`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    key_sets: Vec<Vec<usize>>,
    tau_star: f64,
}

impl GroundTruth {
    pub fn seq_len(&self) -> usize {
        self.key_sets.len()
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    /// Ground-truth keys for query `i`, ascending.
    pub fn key_set(&self, i: usize) -> &[usize] {
        &self.key_sets[i]
    }

    /// Block-level ground truth at granularity `block_size`: block pair
    /// `(m, n)` is marked when any query in block `m` has a ground-truth key
    /// in block `n`.
    pub fn block_truth(&self, block_size: usize) -> BoolMatrix {
        let l = self.seq_len();
        let n_b = l.div_ceil(block_size);
        let mut out = BoolMatrix::falses(n_b, n_b);
        for (i, keys) in self.key_sets.iter().enumerate() {
            let m = i / block_size;
            for &k in keys {
                out.set(m, k / block_size, true);
            }
        }
        out
    }
}

/// Precision/recall/F1 of a predicted selection, with the per-query
/// breakdown retained.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_query: Vec<QueryScore>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryScore {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    InvalidTauStar { tau_star: f64 },
    SeqLenMismatch { truth: usize, selection: usize },
    /// A query had an empty predicted key set; unreachable for selections
    /// that satisfy the `BlockSelection` invariants.
    EmptyPrediction { query: usize },
    Attention(AttentionError),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::InvalidTauStar { tau_star } => {
                write!(f, "tau_star {tau_star} outside (0, 1]")
            }
            OracleError::SeqLenMismatch { truth, selection } => write!(
                f,
                "ground truth for seq_len {truth} scored against selection for seq_len {selection}"
            ),
            OracleError::EmptyPrediction { query } => {
                write!(f, "query {query} has an empty predicted key set")
            }
            OracleError::Attention(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for OracleError {}

impl From<AttentionError> for OracleError {
    fn from(e: AttentionError) -> Self {
        OracleError::Attention(e)
    }
}

/// Ground truth from an explicit causal attention-probability matrix
/// (rows are queries; cells above the diagonal must be zero).
pub fn ground_truth_from_probs(probs: &Matrix, tau_star: f64) -> Result<GroundTruth, OracleError> {
    if !(tau_star > 0.0 && tau_star <= 1.0) {
        return Err(OracleError::InvalidTauStar { tau_star });
    }
    let l = probs.rows();
    let mut key_sets = Vec::with_capacity(l);
    let mut order: Vec<usize> = Vec::new();
    for i in 0..l {
        let row = probs.row(i);
        let mut total = 0.0f64;
        for &x in &row[..=i] {
            total += x as f64;
        }
        order.clear();
        order.extend(0..=i);
        order.sort_unstable_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let threshold = tau_star * total;
        let mut cum = 0.0f64;
        let mut taken = 0usize;
        for &k in order.iter() {
            cum += row[k] as f64;
            taken += 1;
            if cum >= threshold {
                break;
            }
        }
        let mut keys: Vec<usize> = order[..taken].to_vec();
        keys.sort_unstable();
        key_sets.push(keys);
    }
    Ok(GroundTruth { key_sets, tau_star })
}

/// Computes full causal attention probabilities for `t` and derives the
/// ground-truth key sets at `tau_star`.
pub fn ground_truth_sets(t: &HeadTensors, tau_star: f64) -> Result<GroundTruth, OracleError> {
    let probs = causal_attention_probs(t)?;
    ground_truth_from_probs(&probs, tau_star)
}

/// Keys a selection predicts as important for query `i`: the union of its
/// selected blocks' token ranges, intersected with causality. Ascending.
pub fn predicted_key_set(sel: &BlockSelection, i: usize) -> Vec<usize> {
    let b = sel.block_size();
    let qb = i / b;
    let mut keys = Vec::new();
    for n in 0..=qb {
        if sel.blocks().get(qb, n) {
            for k in n * b..((n + 1) * b).min(sel.seq_len()) {
                if k > i {
                    break;
                }
                keys.push(k);
            }
        }
    }
    keys
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let mut ia = 0;
    let mut ib = 0;
    let mut n = 0;
    while ia < a.len() && ib < b.len() {
        match a[ia].cmp(&b[ib]) {
            core::cmp::Ordering::Less => ia += 1,
            core::cmp::Ordering::Greater => ib += 1,
            core::cmp::Ordering::Equal => {
                n += 1;
                ia += 1;
                ib += 1;
            }
        }
    }
    n
}

/// Scores a selection against the ground truth: precision and recall are
/// averaged over queries, F1 comes from the averaged values.
pub fn score_selection(
    sel: &BlockSelection,
    truth: &GroundTruth,
) -> Result<SelectionReport, OracleError> {
    if truth.seq_len() != sel.seq_len() {
        return Err(OracleError::SeqLenMismatch {
            truth: truth.seq_len(),
            selection: sel.seq_len(),
        });
    }
    let l = truth.seq_len();
    let mut per_query = Vec::with_capacity(l);
    let mut sum_p = 0.0f64;
    let mut sum_r = 0.0f64;
    for i in 0..l {
        let pred = predicted_key_set(sel, i);
        if pred.is_empty() {
            return Err(OracleError::EmptyPrediction { query: i });
        }
        let truth_keys = truth.key_set(i);
        let inter = intersection_size(&pred, truth_keys) as f64;
        let p = inter / pred.len() as f64;
        let r = inter / truth_keys.len() as f64;
        per_query.push(QueryScore {
            precision: p,
            recall: r,
        });
        sum_p += p;
        sum_r += r;
    }
    let precision = sum_p / l as f64;
    let recall = sum_r / l as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(SelectionReport {
        precision,
        recall,
        f1,
        per_query,
    })
}
