//! Sparse Gaussian-process collocation for nonlinear PDEs.

pub mod collocation;
pub mod dense;
pub mod elbo;
pub mod error;
pub mod gauss_newton;
pub mod gram;
pub mod kernel;
pub mod pipeline;
pub mod problems;
pub mod reference;
pub mod woodbury;

pub use error::{Result, SgpError};
