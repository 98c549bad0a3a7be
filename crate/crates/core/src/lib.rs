//! Two-dimensional linear-triangle elasticity for ventricle wall contours.
//!
//! Contours of the inner and outer wall are matched by angle, meshed as a
//! structured annulus and driven by their frame-to-frame motion. The solved
//! displacement yields per-element strain, an effective-strain scalar and
//! sector averages that can be compared between subjects.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cardio;
pub mod contour;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod material;
pub mod mesh;
pub mod phantom;
pub mod strain;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::Point2;
