//! Optimal sub-sampling design for isotropic BRDF acquisition.
//!
//! A PCA dictionary is trained on log-relative-mapped measured BRDFs;
//! simultaneous orthogonal matching pursuit over the dictionary inverse picks
//! the measurement directions, and ridge regression on the row-sliced
//! dictionary recovers full BRDFs from those few samples.

// `!(x > 0.0)` also rejects NaN, which is the intent throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod frost;
pub mod merl;
pub mod reconstruct;
pub mod rng;
pub mod synthetic;
pub mod transform;

pub use error::{Error, Result};
