//! Discriminative cost-sensitive learning on feature-vector datasets.
//!
//! The crate trains small dense networks whose deep features are pulled
//! toward per-class centers (optionally weighted by class balance), while a
//! score-level cost matrix reshapes the output scores so that critical
//! classes are hard to miss. It also ships the surrounding evaluation
//! protocol: synthetic imbalanced data, stratified cross-validation, the
//! screening metric suite, and a paired t-test for method comparison.
//!
//! Modules:
//! - [`nncore`]: matrices, dense layers, backprop, Adam.
//! - [`losses`]: softmax cross-entropy, center losses, cost-weighted losses,
//!   and the joint cost-sensitive loss, all with analytic gradients.
//! - [`centers`]: per-class center vectors and their update rules.
//! - [`costs`]: score- and loss-level cost matrices, the score transform,
//!   minimum-expected-risk decisions, and clinical ordering validation.
//! - [`trainer`]: the training loop and prediction.
//! - [`data`]: synthetic datasets, CSV I/O, stratified k-fold splits.
//! - [`eval`]: confusion matrices, metrics, paired t-test.

// `!(x > 0.0)` style checks are deliberate: the negation also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod centers;
pub mod costs;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nncore;
pub mod trainer;

pub use error::{Error, Result};
