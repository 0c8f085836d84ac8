#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod dirac_algebra;
pub mod error;
pub mod fourier;
pub mod green_kernel;
pub mod grid;
pub mod linalg;
pub mod dynamics;
pub mod potential;
pub mod quadrature;
pub mod rls_solver;
pub mod scattering;
