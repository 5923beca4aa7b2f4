//! PCA base dictionary: the orthonormal eigenvector matrix of the training
//! covariance, plus the mean-subtracting projection every encoder input goes
//! through.

use crate::error::{Error, Result};
use crate::linalg::{matmul_nt, matmul_tn, matvec_t, symmetric_eigh, Matrix, Vector};

/// Training mean and full eigenvector basis of the covariance. Columns of
/// `basis` are ordered by descending eigenvalue and are orthonormal within
/// 1e-8.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vector,
    pub basis: Matrix,
    pub eigenvalues: Vector,
}

/// Fits the basis on `samples` (n×t, columns are samples). The covariance is
/// (1/t)·X_c X_cᵀ of the centered data; normalizing by t only scales the
/// eigenvalues, not the eigenvectors.
pub fn pca_fit(samples: &Matrix) -> Result<PcaBasis> {
    let n = samples.rows;
    let t = samples.cols;
    if t < 2 {
        return Err(Error::contract(
            "pca_fit",
            format!("need at least 2 samples, got {t}"),
        ));
    }
    let mut mean = Vector::zeros(n);
    for i in 0..n {
        mean[i] = samples.row(i).iter().sum::<f64>() / t as f64;
    }
    let mut centered = samples.clone();
    for i in 0..n {
        let mu = mean[i];
        for v in centered.row_mut(i) {
            *v -= mu;
        }
    }
    let mut cov = matmul_nt(&centered, &centered)?;
    cov.scale(1.0 / t as f64);
    let (mut eigenvalues, basis) = symmetric_eigh(&cov)?;
    for v in eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-10 {
                return Err(Error::contract(
                    "pca_fit",
                    format!("covariance produced eigenvalue {v}"),
                ));
            }
            *v = 0.0;
        }
    }
    Ok(PcaBasis {
        mean,
        basis,
        eigenvalues,
    })
}

/// Projects one sample: x_PCA = basisᵀ·(x − mean).
pub fn pca_project(basis: &PcaBasis, x: &Vector) -> Result<Vector> {
    if x.len() != basis.mean.len() {
        return Err(Error::shape(
            "pca_project",
            format!("x has len {}, basis expects {}", x.len(), basis.mean.len()),
        ));
    }
    let centered = Vector::from_fn(x.len(), |i| x[i] - basis.mean[i]);
    matvec_t(&basis.basis, &centered)
}

/// Projects a batch (n×t, columns are samples) in one pass.
pub fn pca_project_batch(basis: &PcaBasis, xs: &Matrix) -> Result<Matrix> {
    if xs.rows != basis.mean.len() {
        return Err(Error::shape(
            "pca_project_batch",
            format!("xs has {} rows, basis expects {}", xs.rows, basis.mean.len()),
        ));
    }
    let mut centered = xs.clone();
    for i in 0..xs.rows {
        let mu = basis.mean[i];
        for v in centered.row_mut(i) {
            *v -= mu;
        }
    }
    matmul_tn(&basis.basis, &centered)
}
