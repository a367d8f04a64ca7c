//! Numerical homogenization of periodic nonlocal convolution-type operators.

// `!(x > 0.0)` guards are there to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod effective;
pub mod error;
pub mod fiber;
pub mod grid;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod table;
pub mod threshold;

pub use error::{Error, Result};
