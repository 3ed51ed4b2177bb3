//! Pseudo-spectral solver for the spatially homogeneous Landau-Coulomb
//! equation, with an audit harness for its Bessel-potential energy method.

pub mod error;
mod fft;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod ops;
pub mod solver;
pub mod verification;

pub use error::{GridError, OpsError, SolverError, VerifyError};
pub use grid::{Field, GridSpec, KernelId, SpectralPlan, SymMatField, VecField};
