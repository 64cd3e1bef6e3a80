#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop)] // Stencils read clearer with explicit indices.

//! Numerical laboratory for boundary observability and control of the
//! 1-D wave equation `omega(x) u_tt - u_xx = 0` with rough densities.

pub mod acceptance;
pub mod coeff;
pub mod error;
pub mod modulus;
pub mod observability;
pub mod ode;
pub mod quadrature;
pub mod quasimodes;
pub mod tolerances;
pub mod wavesim;

pub use error::{Error, Result};
