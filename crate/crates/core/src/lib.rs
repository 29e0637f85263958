//! Dynamic block-sparse attention with round-robin query sampling.
//!
//! The crate implements the full pattern-discovery pipeline for block-sparse
//! causal attention on a single head: sample one query per stride with a
//! round-robin offset across heads, estimate stride-level importance against
//! aggregated keys, pool the normalized scores to block granularity, and keep
//! the smallest set of key blocks whose cumulative importance reaches a
//! threshold `tau`. Reference full attention, an anti-diagonal sampling
//! baseline, ground-truth selection metrics, and deterministic synthetic
//! workload generators live alongside it so that every stage can be checked
//! against an independent oracle.
//!
//! Everything is `no_std` (with `alloc`) and deterministic: floating-point
//! transcendentals go through `libm`, reductions are sequential with 64-bit
//! accumulators, and random data comes from a seeded ChaCha8 stream. Two runs
//! with the same inputs produce bit-identical results on any platform.
//!
//! File formats, reports, and the command-line harness are in the companion
//! `sparsegrid` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attention;
pub mod discovery;
pub mod numeric;
pub mod oracle;
pub mod workload;

pub use attention::{BlockSelection, CostReport, HeadTensors};
pub use discovery::{DiscoveryConfig, ImportanceMap, ProtectionModes, Strategy};
pub use numeric::{BoolMatrix, Matrix};
pub use oracle::{GroundTruth, SelectionReport};
pub use workload::{Pattern, Workload, WorkloadSpec};
