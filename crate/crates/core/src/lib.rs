//! Deformations of elastic bodies reinforced by parallel rigid fibers.
// Negated comparisons reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx_identity;
pub mod cli;
pub mod config;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod limit;
pub mod linalg;
pub mod report;
pub mod rigidity;
pub mod sequence;
pub mod verify;

pub use error::{Error, Result};
