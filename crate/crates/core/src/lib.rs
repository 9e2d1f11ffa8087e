//! Self-adjoint extensions of Laplace-type operators on flat 1D and 2D
//! domains, parametrized by unitaries on the boundary.

pub mod boundary;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod scenarios;
pub mod spectra;

pub use error::{Error, Result};
