//! Forward and inverse spectral problems for higher-order differential
//! operators whose coefficients may be distributions.
//!
//! The operator `y^(n) + sum (tau_nu ...)` is regularized into a first-order
//! system `Y' = (F(x) + Lambda) Y` with an associated matrix `F`. The forward
//! side computes eigenvalues and weight numbers of the boundary value problems
//! `L_k`; the inverse side solves the truncated main equation of the method of
//! spectral mappings and recovers the coefficients.

// NaN-rejecting `!(a <= b)` tests and index loops over dense matrices are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assoc;
pub mod asymptotics;
pub mod cli;
pub mod coefficients;
pub mod error;
pub mod forward;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod main_eq;
pub mod ode;
pub mod poly;
pub mod recover;
mod roots;
pub mod validate;

pub use num_complex::Complex64 as C64;

pub use assoc::{AssociatedMatrix, ClassReport};
pub use coefficients::{AsymptoticParameters, CoefficientSet, SigmaSet};
pub use error::{Error, Result};
pub use forward::{SpectralData, SpectralEntry};
pub use poly::Function1D;
