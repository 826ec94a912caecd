//! Logits-based fine-tuning toolkit.
//!
//! The crate is organized around five pieces:
//!
//! - [`distrib`]: pure distribution kernels: temperature softmax, KL
//!   divergence, top-K sparsification, the combined teacher/ground-truth
//!   target, and its four-constraint checker.
//! - [`model`]: a small decoder-only autoregressive model with exact
//!   reverse-mode gradients, usable as both teacher and student.
//! - [`data`]: synthetic corpora, sparse logits dataset generation, the
//!   binary `LFTD` container, and a line-delimited exchange format for
//!   externally produced logits.
//! - [`train`]: the four-mode training loop (sft, seqkd, sd, lft) with
//!   seeded shuffling, plain or adaptive-moment updates, and loss history.
//! - [`eval`]: greedy exact-match evaluation, mode/fraction sweeps, and
//!   target inspection.

pub mod data;
pub mod distrib;
pub mod error;
pub mod eval;
pub mod model;
pub mod train;
pub mod util;

pub use error::{Error, Result};
