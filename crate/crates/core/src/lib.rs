//! Simulator for Byzantine fault-tolerant parallelized SGD.
//!
//! A master samples a mini-batch each iteration and farms gradient
//! computations out to `n` workers, up to `f` of which are Byzantine. The
//! crate implements the traditional (unprotected) method, a deterministic
//! replication scheme with reactive redundancy, a randomized scheme that
//! checks for faults only in randomly chosen iterations, and an adaptive
//! variant that tunes the check probability from the observed loss.
//!
//! Module map:
//!
//! * [`model`]: losses, gradients, datasets, the SGD step
//! * [`codes`]: replication assignment, detection, majority vote, the
//!   three-worker linear code
//! * [`adversary`]: Byzantine tampering with ground-truth records
//! * [`policy`]: efficiency and reliability formulas, fault-check rules
//! * [`engine`]: per-iteration protocols and multi-trial runs
//! * [`harness`]: config files, CSV output, summaries, acceptance checks

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod adversary;
pub mod codes;
pub mod engine;
pub mod error;
pub mod harness;
pub mod model;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};

/// Index of a worker, `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub usize);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}
