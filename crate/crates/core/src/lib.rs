//! Continual multi-label learning oriented at Macro-AUC.
//!
//! The crate bundles the pieces of a replay-based class-incremental learner:
//!
//! - [`dataset`]: multi-hot datasets, a synthetic imbalanced generator, task
//!   splitting with label masking, and a JSON-lines file format.
//! - [`loss`]: the reweighted label-distribution-aware margin loss (RLDAM), its
//!   margin-free reweighted form (RU), a plain BCE baseline and risk assembly.
//! - [`model`]: a linear single-head scorer over a pluggable feature map, with
//!   analytic gradients, SGD and the replay training loop.
//! - [`memory`]: rehearsal buffers. Weight Retain Updating (WRU) greedily matches
//!   per-class positive/negative ratios and keeps the original counts; reservoir
//!   and uniform-random buffers are provided as baselines.
//! - [`eval`]: Macro-AUC, overall Macro-AUC, forgetting and the batch
//!   generalization-bound diagnostic.
//! - [`harness`]: experiment configs, runs, ablations, sweeps and reports.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod harness;
pub mod loss;
pub mod memory;
pub mod model;
pub mod rng;

pub use error::{Error, Result};

/// Global class identifier (row index of the single-head scorer).
pub type ClassId = usize;

/// One-based task identifier.
pub type TaskId = usize;
