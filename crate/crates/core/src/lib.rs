//! Annealed Green's function of small-contrast random divergence-form operators on Z^d.

pub mod asymptotics;
pub mod bessel;
pub mod cli;
pub mod error;
pub mod fft;
pub mod gauss;
pub mod kernel;
pub mod lattice;
pub mod montecarlo;
pub mod perturbation;
pub mod quadrature;
pub mod symbols;

pub use error::{Error, Result};
pub use kernel::{KernelMeta, MatrixKernel, ScalarKernel};
pub use lattice::{Boundary, LatticeField, LatticePoint, MultiIndex};
