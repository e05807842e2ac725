//! Traveling waves of a slow-erosion conservation law with nonlocal flux.
//!
//! The erosion law lives in [`model`]; [`profile`] and [`wave`] build the
//! stationary profiles in drop coordinates, [`tracking`] evolves monotone
//! data with a characteristic-marker solver, [`transforms`] maps between
//! drop, height and physical coordinates and [`harness`] checks convergence
//! against the explicit envelopes.

// NaN must fail every range check, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numerics;
pub mod model;
pub mod profile;
pub mod wave;
pub mod tracking;
pub mod transforms;
pub mod harness;
pub mod cli;

pub use error::{Error, Result};
pub use model::{ErosionFunction, ErosionModel, ModelRegistry, ModelSpec, Selector};
