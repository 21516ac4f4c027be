//! Boosted cascade detector training where each node's AdaBoost stumps are
//! pruned by greedy backward elimination on a sparse linear discriminant
//! objective, with rank-1 updates of the within-class covariance inverse.
//!
//! Data parallelism uses rayon by default; build without the `parallel`
//! feature for a purely sequential library with identical results.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks.

pub mod boost;
pub mod cascade;
pub mod detect;
pub mod error;
pub mod features;
pub mod linalg;
pub mod par;
pub mod prune;
pub mod synth;
pub mod weak;

pub use crate::cascade::{cascade_classify, overall_rates, Cascade, CascadeConfig};
pub use crate::error::{Error, Result};
pub use crate::features::{GrayImage, WindowTables};
