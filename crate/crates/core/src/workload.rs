//! Deterministic synthetic workloads with planted attention patterns.
//!
//! Base Q/K/V values are standard Gaussians from a fixed, portable source:
//! a ChaCha8 stream seeded with the workload seed (stream id `1 + layer *
//! num_heads + head` per head, stream 0 for shared pattern metadata) pushed
//! through the Box-Muller transform evaluated with `libm`. That pipeline is
//! part of the workload contract: the same spec yields bit-identical tensors
//! on every platform.
//!
//! Patterns plant structure on top of the noise by aligning queries and keys
//! along shared unit directions: a boosted key column (`vertical`), several
//! boosted columns (`scatter`), bucketed locality around the diagonal
//! (`local`), or a fixed-offset alignment (`slash`). Values are always drawn
//! independently of the planted structure, so output error genuinely
//! reflects mask quality. `self_check` verifies against the ground-truth
//! oracle that the planted cells actually carry the attention mass.

use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::attention::{causal_attention_probs, AttentionError, HeadTensors};
use crate::numeric::Matrix;
use crate::oracle::{ground_truth_from_probs, OracleError};

/// Gain at which every planted pattern dominates its queries' ground-truth
/// mass for head dims up to 64 and sequence lengths up to 4096.
pub const DEFAULT_SIGNAL_GAIN: f32 = 12.0;

/// Containment fraction the generator self-check requires of planted cells.
pub const SELF_CHECK_MIN_CONTAINMENT: f64 = 0.9;

const PATTERN_STREAM: u64 = 0;

/// Planted attention structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Random,
    /// Locality in buckets of `window` tokens around the diagonal.
    Local { window: usize },
    /// One heavily attended key column.
    Vertical { column: usize },
    /// Each query attends to the key `offset` positions back.
    Slash { offset: usize },
    /// `count` boosted key columns at seeded positions.
    Scatter { count: usize },
}

/// Declarative description of a synthetic workload. Generation is a pure
/// function of the spec; equal specs give bit-identical tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub seq_len: usize,
    pub head_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub pattern: Pattern,
    pub signal_gain: f32,
    pub seed: u64,
}

/// Where the generator planted signal, resolvable to causal keys per query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Planted {
    None,
    /// Boosted key columns (vertical and scatter patterns).
    Columns(Vec<usize>),
    /// Same-bucket locality: query `i` is aligned with keys in its
    /// `window`-sized bucket.
    Buckets { window: usize },
    /// Query `i` is aligned with key `i - offset`.
    Slash { offset: usize },
}

impl Planted {
    /// Whether `(query, key)` is a planted causal cell.
    pub fn contains(&self, query: usize, key: usize) -> bool {
        if key > query {
            return false;
        }
        match self {
            Planted::None => false,
            Planted::Columns(cols) => cols.contains(&key),
            Planted::Buckets { window } => key / window == query / window,
            Planted::Slash { offset } => key + offset == query,
        }
    }

    /// Planted causal keys for `query`, ascending.
    pub fn keys_for_query(&self, query: usize) -> Vec<usize> {
        match self {
            Planted::None => Vec::new(),
            Planted::Columns(cols) => cols.iter().copied().filter(|&c| c <= query).collect(),
            Planted::Buckets { window } => ((query / window) * window..=query).collect(),
            Planted::Slash { offset } => {
                if query >= *offset {
                    alloc::vec![query - offset]
                } else {
                    Vec::new()
                }
            }
        }
    }
}

/// A generated (or loaded) collection of per-`(layer, head)` tensors.
#[derive(Debug, Clone)]
pub struct Workload {
    num_layers: usize,
    num_heads: usize,
    tensors: Vec<HeadTensors>,
    pub planted: Planted,
}

impl Workload {
    /// Wraps externally produced tensors (e.g. loaded from a file).
    /// `tensors` is layer-major: index `layer * num_heads + head`.
    pub fn from_tensors(
        num_layers: usize,
        num_heads: usize,
        tensors: Vec<HeadTensors>,
    ) -> Result<Self, WorkloadError> {
        if num_layers == 0 || num_heads == 0 {
            return Err(WorkloadError::ZeroDim { field: "layers/heads" });
        }
        if tensors.len() != num_layers * num_heads {
            return Err(WorkloadError::TensorCount {
                got: tensors.len(),
                expected: num_layers * num_heads,
            });
        }
        let shape = tensors[0].q.shape();
        if tensors.iter().any(|t| t.q.shape() != shape) {
            return Err(WorkloadError::RaggedTensors);
        }
        Ok(Self {
            num_layers,
            num_heads,
            tensors,
            planted: Planted::None,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn seq_len(&self) -> usize {
        self.tensors[0].seq_len()
    }

    pub fn head_dim(&self) -> usize {
        self.tensors[0].head_dim()
    }

    pub fn head(&self, layer: usize, head: usize) -> &HeadTensors {
        &self.tensors[layer * self.num_heads + head]
    }

    pub fn heads(&self) -> impl Iterator<Item = (usize, usize, &HeadTensors)> {
        let h = self.num_heads;
        self.tensors
            .iter()
            .enumerate()
            .map(move |(idx, t)| (idx / h, idx % h, t))
    }

    /// Verifies against the ground-truth oracle that, for every query with a
    /// causal planted cell, at least [`SELF_CHECK_MIN_CONTAINMENT`] of the
    /// query's `tau_star` ground-truth mass lies inside the planted cells.
    pub fn self_check(&self, tau_star: f64) -> Result<SelfCheckReport, WorkloadError> {
        if self.planted == Planted::None {
            return Ok(SelfCheckReport {
                planted: false,
                heads_checked: 0,
                queries_checked: 0,
                min_containment: 1.0,
                pass: true,
            });
        }
        let mut min_containment = 1.0f64;
        let mut queries_checked = 0usize;
        let mut heads_checked = 0usize;
        for (_, _, t) in self.heads() {
            let probs = causal_attention_probs(t).map_err(WorkloadError::Attention)?;
            let truth = ground_truth_from_probs(&probs, tau_star).map_err(WorkloadError::Oracle)?;
            heads_checked += 1;
            for i in 0..self.seq_len() {
                let planted_keys = self.planted.keys_for_query(i);
                if planted_keys.is_empty() {
                    continue;
                }
                let mut mass_total = 0.0f64;
                let mut mass_in = 0.0f64;
                for &k in truth.key_set(i) {
                    let p = probs.get(i, k) as f64;
                    mass_total += p;
                    if self.planted.contains(i, k) {
                        mass_in += p;
                    }
                }
                let containment = if mass_total > 0.0 {
                    mass_in / mass_total
                } else {
                    0.0
                };
                if containment < min_containment {
                    min_containment = containment;
                }
                queries_checked += 1;
            }
        }
        Ok(SelfCheckReport {
            planted: true,
            heads_checked,
            queries_checked,
            min_containment,
            pass: min_containment >= SELF_CHECK_MIN_CONTAINMENT,
        })
    }
}

/// Outcome of [`Workload::self_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckReport {
    /// False when the workload has no planted cells (random pattern).
    pub planted: bool,
    pub heads_checked: usize,
    pub queries_checked: usize,
    pub min_containment: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadError {
    ZeroDim {
        field: &'static str,
    },
    /// A pattern parameter does not fit the sequence length.
    ParamOutOfRange {
        name: &'static str,
        value: usize,
        seq_len: usize,
    },
    TensorCount {
        got: usize,
        expected: usize,
    },
    RaggedTensors,
    /// The adversarial fixture reserves two coordinate channels.
    AdversarialHeadDim {
        head_dim: usize,
    },
    Attention(AttentionError),
    Oracle(OracleError),
}

impl fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadError::ZeroDim { field } => write!(f, "{field} must be >= 1"),
            WorkloadError::ParamOutOfRange {
                name,
                value,
                seq_len,
            } => write!(
                f,
                "pattern parameter {name}={value} invalid for seq_len {seq_len}"
            ),
            WorkloadError::TensorCount { got, expected } => {
                write!(f, "got {got} head tensors, expected {expected}")
            }
            WorkloadError::RaggedTensors => write!(f, "head tensors disagree on shape"),
            WorkloadError::AdversarialHeadDim { head_dim } => write!(
                f,
                "adversarial fixture needs head_dim >= 3, got {head_dim}"
            ),
            WorkloadError::Attention(e) => write!(f, "{e}"),
            WorkloadError::Oracle(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for WorkloadError {}

/// Standard Gaussian stream: ChaCha8 uniforms through Box-Muller.
///
/// Both halves are fixed: the uniform is `((x >> 11) + 1) * 2^-53` over
/// `(0, 1]`, and the transform uses `libm`'s `log`/`sqrt`/`cos`/`sin`, so
/// the byte-to-value mapping never depends on platform math libraries.
struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn uniform_open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / 9007199254740992.0)
    }

    fn next(&mut self) -> f32 {
        if let Some(z) = self.spare.take() {
            return z as f32;
        }
        let u1 = self.uniform_open01();
        let u2 = self.uniform_open01();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        (r * libm::cos(theta)) as f32
    }

    fn fill_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.next());
        }
        Matrix::from_vec(rows, cols, data)
    }

    /// Random unit direction in `dim` coordinates.
    fn unit_direction(&mut self, dim: usize) -> Vec<f32> {
        let mut v: Vec<f32> = (0..dim).map(|_| self.next()).collect();
        let norm = libm::sqrt(v.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
        if norm < 1e-6 {
            v[0] = 1.0;
            return v;
        }
        for x in v.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }
        v
    }
}

fn add_scaled(row: &mut [f32], dir: &[f32], gain: f32) {
    for (x, &d) in row.iter_mut().zip(dir.iter()) {
        *x += gain * d;
    }
}

/// Shared per-workload pattern data drawn from the reserved stream.
enum PatternPlan {
    None,
    Columns { cols: Vec<usize>, dir: Vec<f32> },
    Buckets { window: usize, dirs: Vec<Vec<f32>> },
    Slash { offset: usize, dirs: Vec<Vec<f32>> },
}

fn build_pattern_plan(spec: &WorkloadSpec) -> Result<PatternPlan, WorkloadError> {
    let l = spec.seq_len;
    let d = spec.head_dim;
    let mut rng = GaussianStream::new(spec.seed, PATTERN_STREAM);
    match spec.pattern {
        Pattern::Random => Ok(PatternPlan::None),
        Pattern::Vertical { column } => {
            if column >= l {
                return Err(WorkloadError::ParamOutOfRange {
                    name: "column",
                    value: column,
                    seq_len: l,
                });
            }
            Ok(PatternPlan::Columns {
                cols: alloc::vec![column],
                dir: rng.unit_direction(d),
            })
        }
        Pattern::Scatter { count } => {
            if count == 0 || count > l {
                return Err(WorkloadError::ParamOutOfRange {
                    name: "count",
                    value: count,
                    seq_len: l,
                });
            }
            let mut cols: Vec<usize> = Vec::with_capacity(count);
            while cols.len() < count {
                let c = (rng.rng.next_u64() % l as u64) as usize;
                if !cols.contains(&c) {
                    cols.push(c);
                }
            }
            cols.sort_unstable();
            Ok(PatternPlan::Columns {
                cols,
                dir: rng.unit_direction(d),
            })
        }
        Pattern::Local { window } => {
            if window == 0 || window >= l {
                return Err(WorkloadError::ParamOutOfRange {
                    name: "window",
                    value: window,
                    seq_len: l,
                });
            }
            let buckets = l.div_ceil(window);
            let dirs = (0..buckets).map(|_| rng.unit_direction(d)).collect();
            Ok(PatternPlan::Buckets { window, dirs })
        }
        Pattern::Slash { offset } => {
            if offset >= l {
                return Err(WorkloadError::ParamOutOfRange {
                    name: "offset",
                    value: offset,
                    seq_len: l,
                });
            }
            let dirs = (0..l).map(|_| rng.unit_direction(d)).collect();
            Ok(PatternPlan::Slash { offset, dirs })
        }
    }
}

/// Generates the workload described by `spec`.
///
/// Per `(layer, head)` the stream `1 + layer*num_heads + head` fills Q, then
/// K, then V, row-major; the pattern plan from stream 0 is shared by every
/// head. The planted structure never touches V.
pub fn generate(spec: &WorkloadSpec) -> Result<Workload, WorkloadError> {
    if spec.seq_len == 0 {
        return Err(WorkloadError::ZeroDim { field: "seq_len" });
    }
    if spec.head_dim == 0 {
        return Err(WorkloadError::ZeroDim { field: "head_dim" });
    }
    if spec.num_heads == 0 {
        return Err(WorkloadError::ZeroDim { field: "num_heads" });
    }
    if spec.num_layers == 0 {
        return Err(WorkloadError::ZeroDim { field: "num_layers" });
    }
    let plan = build_pattern_plan(spec)?;
    let l = spec.seq_len;
    let d = spec.head_dim;
    let g = spec.signal_gain;

    let mut tensors = Vec::with_capacity(spec.num_layers * spec.num_heads);
    for layer in 0..spec.num_layers {
        for head in 0..spec.num_heads {
            let stream = 1 + (layer * spec.num_heads + head) as u64;
            let mut rng = GaussianStream::new(spec.seed, stream);
            let mut q = rng.fill_matrix(l, d);
            let mut k = rng.fill_matrix(l, d);
            let v = rng.fill_matrix(l, d);

            match &plan {
                PatternPlan::None => {}
                PatternPlan::Columns { cols, dir } => {
                    for i in 0..l {
                        add_scaled(q.row_mut(i), dir, g);
                    }
                    for &c in cols {
                        add_scaled(k.row_mut(c), dir, g);
                    }
                }
                PatternPlan::Buckets { window, dirs } => {
                    for i in 0..l {
                        add_scaled(q.row_mut(i), &dirs[i / window], g);
                        add_scaled(k.row_mut(i), &dirs[i / window], g);
                    }
                }
                PatternPlan::Slash { offset, dirs } => {
                    for i in 0..l {
                        if i >= *offset {
                            add_scaled(q.row_mut(i), &dirs[i - offset], g);
                        }
                        add_scaled(k.row_mut(i), &dirs[i], g);
                    }
                }
            }

            tensors.push(HeadTensors::new(q, k, v).map_err(WorkloadError::Attention)?);
        }
    }

    let planted = match plan {
        PatternPlan::None => Planted::None,
        PatternPlan::Columns { cols, .. } => Planted::Columns(cols),
        PatternPlan::Buckets { window, .. } => Planted::Buckets { window },
        PatternPlan::Slash { offset, .. } => Planted::Slash { offset },
    };
    Ok(Workload {
        num_layers: spec.num_layers,
        num_heads: spec.num_heads,
        tensors,
        planted,
    })
}

/// Vertical-pattern fixture that defeats fixed-offset sampling.
///
/// Two coordinate channels are reserved. Channel 0 carries a sink column at
/// key 0; channel 1 carries an equally strong decoy column at key
/// `block_size` (the first key of block 1), visible to every query. Queries
/// at the fixed sampling offset `stride - 1` within each stride have their
/// channel-0 component zeroed, except on heads whose own round-robin offset
/// is `stride - 1` (head index 0 mod `stride`), where zeroing would blind
/// the round-robin schedule too.
///
/// Fixed sampling therefore sees only the decoy on blinded heads and skips
/// the sink's block column, while head round-robin sampling lands on
/// signal-bearing queries on every head and keeps it. The gain is sized so
/// stride-level estimates separate by tens of softmax units.
pub fn adversarial_vertical(
    seq_len: usize,
    head_dim: usize,
    num_heads: usize,
    stride: usize,
    block_size: usize,
    seed: u64,
) -> Result<Workload, WorkloadError> {
    if seq_len == 0 || num_heads == 0 || stride == 0 {
        return Err(WorkloadError::ZeroDim {
            field: "seq_len/num_heads/stride",
        });
    }
    if head_dim < 3 {
        return Err(WorkloadError::AdversarialHeadDim { head_dim });
    }
    if block_size == 0 || block_size >= seq_len {
        return Err(WorkloadError::ParamOutOfRange {
            name: "block_size",
            value: block_size,
            seq_len,
        });
    }
    let l = seq_len;
    let d = head_dim;
    let s = stride;
    let gain = libm::sqrt(15.0 * s as f64 * libm::sqrt(d as f64)) as f32;

    let mut tensors = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let mut rng = GaussianStream::new(seed, 1 + h as u64);
        let mut q = rng.fill_matrix(l, d);
        let mut k = rng.fill_matrix(l, d);
        let v = rng.fill_matrix(l, d);

        let head_offset_is_fixed = h % s == 0;
        for i in 0..l {
            let blind = i % s == s - 1 && !head_offset_is_fixed;
            q.set(i, 0, if blind { 0.0 } else { gain });
            q.set(i, 1, gain);
            k.set(i, 0, 0.0);
            k.set(i, 1, 0.0);
        }
        k.set(0, 0, gain);
        k.set(block_size, 1, gain);

        tensors.push(HeadTensors::new(q, k, v).map_err(WorkloadError::Attention)?);
    }
    Ok(Workload {
        num_layers: 1,
        num_heads,
        tensors,
        planted: Planted::Columns(alloc::vec![0, block_size]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec(pattern: Pattern, l: usize, d: usize, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            seq_len: l,
            head_dim: d,
            num_heads: 1,
            num_layers: 1,
            pattern,
            signal_gain: DEFAULT_SIGNAL_GAIN,
            seed,
        }
    }

    #[test]
    fn same_spec_is_bit_identical() {
        let s = WorkloadSpec {
            num_heads: 2,
            num_layers: 2,
            ..spec(Pattern::Vertical { column: 3 }, 24, 8, 99)
        };
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        for ((_, _, ta), (_, _, tb)) in a.heads().zip(b.heads()) {
            assert_eq!(ta.q.data(), tb.q.data());
            assert_eq!(ta.k.data(), tb.k.data());
            assert_eq!(ta.v.data(), tb.v.data());
        }
        assert_eq!(a.planted, b.planted);
    }

    #[test]
    fn different_heads_get_different_noise() {
        let s = WorkloadSpec {
            num_heads: 2,
            ..spec(Pattern::Random, 16, 4, 7)
        };
        let w = generate(&s).unwrap();
        assert_ne!(w.head(0, 0).q.data(), w.head(0, 1).q.data());
    }

    #[test]
    fn gaussian_source_has_roughly_unit_variance() {
        let mut g = GaussianStream::new(1234, 0);
        let n = 20000;
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for _ in 0..n {
            let x = g.next() as f64;
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn random_pattern_reports_no_planted_cells() {
        let s = WorkloadSpec {
            signal_gain: 0.0,
            ..spec(Pattern::Random, 32, 8, 5)
        };
        let w = generate(&s).unwrap();
        assert_eq!(w.planted, Planted::None);
        let check = w.self_check(0.95).unwrap();
        assert!(!check.planted);
        assert!(check.pass);
        assert_eq!(check.queries_checked, 0);
    }

    #[test]
    fn vertical_sink_dominates_ground_truth() {
        let s = spec(Pattern::Vertical { column: 0 }, 256, 32, 11);
        let w = generate(&s).unwrap();
        let truth =
            crate::oracle::ground_truth_sets(w.head(0, 0), 0.95).unwrap();
        let mut hits = 0usize;
        for i in 1..256 {
            if truth.key_set(i).contains(&0) {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.99 * 255.0, "sink present for {hits}/255");
    }

    #[test]
    fn self_check_passes_for_all_default_gain_patterns() {
        let patterns = [
            Pattern::Vertical { column: 5 },
            Pattern::Local { window: 16 },
            Pattern::Slash { offset: 7 },
            Pattern::Scatter { count: 4 },
        ];
        for p in patterns {
            let s = spec(p.clone(), 128, 16, 21);
            let w = generate(&s).unwrap();
            let check = w.self_check(0.95).unwrap();
            assert!(
                check.pass,
                "{p:?}: min containment {}",
                check.min_containment
            );
            assert!(check.queries_checked > 0);
        }
    }

    #[test]
    fn planted_key_queries() {
        let planted = Planted::Columns(vec![2, 9]);
        assert_eq!(planted.keys_for_query(1), Vec::<usize>::new());
        assert_eq!(planted.keys_for_query(5), vec![2]);
        assert_eq!(planted.keys_for_query(9), vec![2, 9]);

        let buckets = Planted::Buckets { window: 4 };
        assert_eq!(buckets.keys_for_query(6), vec![4, 5, 6]);

        let slash = Planted::Slash { offset: 3 };
        assert_eq!(slash.keys_for_query(2), Vec::<usize>::new());
        assert_eq!(slash.keys_for_query(7), vec![4]);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(matches!(
            generate(&spec(Pattern::Vertical { column: 16 }, 16, 4, 1)),
            Err(WorkloadError::ParamOutOfRange { name: "column", .. })
        ));
        assert!(matches!(
            generate(&spec(Pattern::Local { window: 16 }, 16, 4, 1)),
            Err(WorkloadError::ParamOutOfRange { name: "window", .. })
        ));
        assert!(matches!(
            generate(&spec(Pattern::Slash { offset: 99 }, 16, 4, 1)),
            Err(WorkloadError::ParamOutOfRange { name: "offset", .. })
        ));
        assert!(matches!(
            generate(&spec(Pattern::Scatter { count: 0 }, 16, 4, 1)),
            Err(WorkloadError::ParamOutOfRange { name: "count", .. })
        ));
        assert!(matches!(
            generate(&WorkloadSpec {
                seq_len: 0,
                ..spec(Pattern::Random, 16, 4, 1)
            }),
            Err(WorkloadError::ZeroDim { .. })
        ));
    }

    #[test]
    fn scatter_columns_are_distinct_and_sorted() {
        let s = spec(Pattern::Scatter { count: 6 }, 64, 8, 77);
        let w = generate(&s).unwrap();
        match &w.planted {
            Planted::Columns(cols) => {
                assert_eq!(cols.len(), 6);
                for pair in cols.windows(2) {
                    assert!(pair[0] < pair[1]);
                }
                assert!(cols.iter().all(|&c| c < 64));
            }
            other => panic!("unexpected planted {other:?}"),
        }
    }

    #[test]
    fn adversarial_fixture_channels() {
        let s = 8;
        let w = adversarial_vertical(64, 32, 4, s, 16, 3).unwrap();
        assert_eq!(w.num_heads(), 4);
        let gain = libm::sqrt(15.0 * 8.0 * libm::sqrt(32.0)) as f32;

        // Head 0 samples offset 7 itself: nothing is blinded there.
        let t0 = w.head(0, 0);
        for i in 0..64 {
            assert_eq!(t0.q.get(i, 0), gain);
            assert_eq!(t0.q.get(i, 1), gain);
        }
        // Head 1 blinds exactly the fixed offsets.
        let t1 = w.head(0, 1);
        for i in 0..64 {
            let want = if i % s == s - 1 { 0.0 } else { gain };
            assert_eq!(t1.q.get(i, 0), want, "row {i}");
        }
        // Sink and decoy key channels.
        for t in [t0, t1] {
            assert_eq!(t.k.get(0, 0), gain);
            assert_eq!(t.k.get(16, 1), gain);
            for j in 1..64 {
                assert_eq!(t.k.get(j, 0), 0.0);
            }
        }
        assert_eq!(w.planted, Planted::Columns(vec![0, 16]));
    }

    #[test]
    fn adversarial_fixture_validation() {
        assert!(matches!(
            adversarial_vertical(64, 2, 4, 8, 16, 3),
            Err(WorkloadError::AdversarialHeadDim { head_dim: 2 })
        ));
        assert!(matches!(
            adversarial_vertical(64, 8, 4, 8, 64, 3),
            Err(WorkloadError::ParamOutOfRange { .. })
        ));
    }

    #[test]
    fn from_tensors_validates_shape() {
        let t = HeadTensors::new(Matrix::zeros(4, 2), Matrix::zeros(4, 2), Matrix::zeros(4, 2))
            .unwrap();
        assert!(Workload::from_tensors(1, 2, vec![t.clone()]).is_err());
        assert!(Workload::from_tensors(1, 1, vec![t]).is_ok());
    }
}
