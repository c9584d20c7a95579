//! Row-sparse PCA: find `r` orthonormal components that share a support of
//! at most `k` variables and maximize `Tr(V^T A V)`.
//!
//! The crate provides primal solutions through a proxy-objective greedy swap
//! search, certified upper bounds through an SOS-II branch-and-bound over a
//! second-order-cone relaxation, a sub-matrix decomposition for larger
//! instances, and an exhaustive oracle for small ones.

pub mod cli;
pub mod dual;
pub mod error;
pub mod geometry;
pub mod instances;
pub mod linalg;
pub mod oracle;
pub mod primal;
pub mod rng;
pub mod submatrix;

pub use error::{Error, Result};
pub use linalg::{EigenDecomposition, SymmetricMatrix};
