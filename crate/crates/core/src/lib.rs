//! Super-localized numerical homogenization for `-div(A grad u) = f` on the
//! unit square (or interval) with rough scalar coefficients.
//!
//! The pipeline: [`mesh`] builds coarse meshes and patches, [`coefficient`]
//! provides the coefficient, [`fem`] is the fine-scale Q1 engine,
//! [`localizer`] selects source terms from the harmonic space of each patch,
//! [`basis`] solves the patch problems and [`homogenize`] assembles and
//! solves the coarse system. [`harness`] drives experiments from the CLI.

// Index loops mirror the math in the assembly kernels; `!(x > 0.0)` is
// used on purpose so NaN takes the failure branch.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod coefficient;
pub mod error;
pub mod fem;
pub mod harness;
pub mod homogenize;
pub mod localizer;
pub mod mesh;

pub use error::{Result, SlodError};
