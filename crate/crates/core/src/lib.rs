//! Enstrophy-flux diagnostics for 3D incompressible MHD on a periodic box.
//!
//! The crate bundles a pseudo-spectral field generator with the machinery to
//! localize kinetic and magnetic enstrophy fluxes in scale: refined test
//! functions, lattice partitions of unity, multiplicity-bounded ensembles and
//! their averages, and estimators for the structural hypotheses under which
//! enstrophy is transported to small scales.

pub mod analytic;
pub mod assumptions;
pub mod ensemble;
pub mod error;
pub mod fft;
pub mod flux;
pub mod grid;
pub mod profile;
pub mod solver;
pub mod spectral;
pub mod test_function;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, VectorField3};
