//! Numerical laboratory for half-line discrete Schroedinger operators
//! `(Hu)(n) = u(n+1) + u(n-1) + V(n) u(n)` with Dirichlet condition at 0.

// `!(x > y)` comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod embedded;
pub mod error;
pub mod fit;
pub mod oscillatory;
pub mod par;
pub mod potentials;
pub mod scan;
pub mod spectral;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
