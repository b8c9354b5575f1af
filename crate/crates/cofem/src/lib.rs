//! Covariance-free EM solvers for clustered multi-task compressive sensing.
//!
//! Multiple compressive sensing tasks are modeled as a mixture over `C`
//! clusters, each cluster sharing one per-dimension regularization vector.
//! Two inference paths fit the model:
//!
//! * the dense EM baseline, which factorizes every posterior precision
//!   matrix exactly, and
//! * the covariance-free path (CoFEM), which replaces all matrix inversions
//!   and log-determinants with conjugate-gradient solves, Hutchinson-style
//!   diagonal estimation, and stochastic Lanczos quadrature.
//!
//! The [`simulate`] module generates the planted-cluster benchmark and the
//! [`experiment`] module runs the comparison scenarios behind the `cofem`
//! command-line tool.

pub mod config;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod io;
pub mod krylov;
pub mod model;
pub mod operators;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
