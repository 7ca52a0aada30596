//! Periodic spectral laboratory for mollification, commutator fluxes and
//! energy conservation of the 3D Euler and Navier-Stokes equations on the
//! torus `(R / 2πZ)^3`.

// Negated comparisons are how inputs reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod besov;
pub mod commutator;
pub mod error;
pub mod experiments;
pub mod exponents;
mod fft;
pub mod field;
pub mod fit;
pub mod mollify;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use field::{Grid, PhysicalField, SpectralField};
pub use mollify::{Epsilon, MollifierKernel};
