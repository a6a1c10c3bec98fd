// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coulomb;
pub mod error;
pub mod matrix;
pub mod moments;
pub mod phase;
pub mod quadrature;
pub mod rng;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
