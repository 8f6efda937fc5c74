//! Numerical laboratory for spectral inequalities of divergence-form Laplacians on the
//! torus, propagation of smallness for their harmonic extensions, and null control of
//! the associated heat equation.

pub mod control;
pub mod error;
pub mod extension;
pub mod fit;
pub mod grid;
pub mod operator;
pub mod rng;
pub mod sets;
pub mod specineq;

pub use error::{Error, Result};
pub use grid::{build_torus, cell_cover, sample_coefficients, Cell, CoefficientField, CoefficientSpec, Grid, Metric};
pub use operator::{assemble, eigendecompose, EllipticOperator, SpectralDecomposition, SpectralFunction};
