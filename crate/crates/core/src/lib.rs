// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod grid;
pub mod hierarchy;
pub mod image;
pub mod io;
pub mod levelset;
pub mod signals;
pub mod solver;

pub use error::{Result, StereoError};
