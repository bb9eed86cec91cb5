#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod metrology;
pub mod quadrature;
pub mod roots;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
