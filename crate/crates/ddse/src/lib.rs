//! Deep double sparsity encoder: an unrolled ISTA network whose weights are
//! constrained to at most s nonzeros per row (or column), trained by projected
//! gradient descent, together with the classical ISTA sparse-coding solver it
//! unrolls, a PCA base dictionary, five baseline architectures for controlled
//! comparison, and a compressed sparse inference path.
//!
//! Layout:
//! - [`linalg`]: dense matrices/vectors, spectral norm, Jacobi eigensolver
//! - [`rng`]: seeded xoshiro256++ generator with named substreams
//! - [`sparse_coding`]: soft shrinkage and the ISTA reference solver
//! - [`pca`]: base-dictionary fit and projection
//! - [`encoder`]: forward passes for all six architectures
//! - [`autodiff`]: hand-derived backward passes and batch gradients
//! - [`projection`]: row/column top-s hard thresholding
//! - [`trainer`]: SGD-with-momentum PGD loop, init, evaluation
//! - [`sparse_store`]: CSR compression and the sparse inference path
//! - [`data`]: IDX parsing, subsampling, augmentation, synthetic data
//! - [`checkpoint`]: self-describing binary model container

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod pca;
pub mod projection;
pub mod rng;
pub mod sparse_coding;
pub mod sparse_store;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use rng::Rng;
