//! Causally fair feature selection.
//!
//! Given a dataset with a sensitive attribute, a set of admissible variables,
//! a target, and a pool of candidate features, this crate selects the
//! candidates that can be used for prediction without routing sensitive
//! information to the target except through the admissible variables.
//!
//! The pieces:
//!
//! - [`graph`]: role-tagged DAGs, d-separation, and graph-level oracles for
//!   ground-truth selection when the causal structure is known.
//! - [`scm`]: structural causal models for sampling synthetic datasets,
//!   including interventional sampling and a benchmark-family generator.
//! - [`ci`]: conditional-independence tests (d-separation oracle, partial
//!   correlation, stratified G-test) behind one trait, with group queries.
//! - [`selector`]: the two selection algorithms, one testing candidates one at
//!   a time and one testing groups with recursive splitting, plus a test-count
//!   benchmark harness.
//! - [`logistic`]: a small deterministic logistic-regression trainer used to
//!   evaluate downstream effects of a selection.
//! - [`metrics`]: fairness metrics (absolute odds difference, conditional
//!   mutual information, interventional gap).
//! - [`data`]: the column-oriented dataset type and its CSV/JSON formats.

pub mod ci;
pub mod data;
pub mod error;
pub mod graph;
pub mod logistic;
pub mod metrics;
pub mod scm;
pub mod selector;

pub use error::{Error, Result};
