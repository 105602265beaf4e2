//! Correlation-filter tracking with patch-wise reliability weights.
//!
//! The crate implements a discriminative correlation filter whose effective
//! filter factors into a shared base filter `h` and a per-cell reliability
//! map `v` built from a small grid of target patches: `w_d = h_d ⊙ v`, with
//! `v = Σ_m β_m p^m` and the patch weights `β` box-constrained. Training
//! alternates between
//!
//! * a matrix-free conjugate-gradient solve for `h` whose operator is
//!   applied entirely through 2-D FFTs, and
//! * a small box-constrained quadratic program for `β`.
//!
//! On top of the learner sit a weighted sample memory, a multi-scale online
//! tracker, a deterministic synthetic-sequence generator and an OPE-style
//! evaluation harness. Everything is deterministic for a fixed seed and
//! independent of thread count.
//!
//! The main entry points are [`tracker::TrackerState`] for online tracking,
//! [`learn::joint_learn`] for one-shot filter training, [`synth::generate`]
//! for test sequences and [`eval::ope_metrics`] for benchmark scoring.

pub mod bbox;
pub mod error;
pub mod eval;
pub mod features;
pub mod labels;
pub mod learn;
pub mod memory;
pub mod synth;
pub mod tensor;
pub mod tracker;

pub use bbox::BoundingBox;
pub use error::{Error, Result};
