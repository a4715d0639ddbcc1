//! Smooth near-isometric extension of maps defined on a union of balls.

// Checks are written `!(x >= limit)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod compact_set;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod motions;
pub mod sampling;
pub mod scenario;
pub mod smooth;
pub mod source_maps;
pub mod verification;
pub mod whitney;

pub use error::{Error, Result};
