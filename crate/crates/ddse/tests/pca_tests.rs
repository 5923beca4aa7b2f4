mod common;

use common::max_gap;
use ddse::linalg::{matmul_tn, matvec, matvec_t};
use ddse::pca::{pca_fit, pca_project, pca_project_batch};
use ddse::{Error, Matrix, Rng, Vector};
use proptest::prelude::*;

/// n×t sample matrix with independent axis-aligned Gaussian columns.
fn gaussian_samples(scales: &[f64], t: usize, rng: &mut Rng) -> Matrix {
    let n = scales.len();
    let mut m = Matrix::zeros(n, t);
    for j in 0..t {
        for i in 0..n {
            m[(i, j)] = scales[i] * rng.normal();
        }
    }
    m
}

fn column(m: &Matrix, j: usize) -> Vector {
    Vector::from_fn(m.rows, |i| m[(i, j)])
}

fn reconstruct(basis: &ddse::pca::PcaBasis, y: &Vector) -> Vector {
    let by = matvec(&basis.basis, y).unwrap();
    Vector::from_fn(by.len(), |i| by[i] + basis.mean[i])
}

#[test]
fn rejects_fewer_than_two_samples() {
    let one = Matrix::zeros(3, 1);
    assert!(matches!(pca_fit(&one), Err(Error::Contract { .. })));
    let none = Matrix::zeros(3, 0);
    assert!(pca_fit(&none).is_err());
}

#[test]
fn basis_columns_are_orthonormal() {
    let mut rng = Rng::new(11);
    let xs = gaussian_samples(&[3.0, 2.5, 2.0, 1.5, 1.0, 0.5], 200, &mut rng);
    let b = pca_fit(&xs).unwrap();
    let gram = matmul_tn(&b.basis, &b.basis).unwrap();
    let eye = Matrix::identity(6);
    let gap = gram
        .data
        .iter()
        .zip(eye.data.iter())
        .map(|(a, c)| (a - c).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-10, "gram deviates from identity by {gap}");
}

#[test]
fn eigenvalues_descend_and_match_axis_variances() {
    let mut rng = Rng::new(12);
    let scales = [4.0, 2.0, 1.0, 0.25];
    let xs = gaussian_samples(&scales, 20_000, &mut rng);
    let b = pca_fit(&xs).unwrap();
    for w in b.eigenvalues.windows(2) {
        assert!(w[0] >= w[1] - 1e-12, "eigenvalues not descending");
    }
    // Axis-aligned data: eigenvalues estimate scale^2 within O(1/sqrt(t)).
    for (i, &s) in scales.iter().enumerate() {
        let rel = (b.eigenvalues[i] - s * s).abs() / (s * s);
        assert!(rel < 0.08, "eigenvalue {i}: {} vs {}", b.eigenvalues[i], s * s);
    }
}

#[test]
fn projection_exactly_decorrelates_training_data() {
    let mut rng = Rng::new(13);
    // Strongly correlated pair plus an independent axis.
    let t = 2_000;
    let mut xs = Matrix::zeros(3, t);
    for j in 0..t {
        let a = rng.normal();
        xs[(0, j)] = a;
        xs[(1, j)] = a + 0.1 * rng.normal();
        xs[(2, j)] = 0.5 * rng.normal();
    }
    let b = pca_fit(&xs).unwrap();
    let ys = pca_project_batch(&b, &xs).unwrap();
    // The projected training covariance is diag(eigenvalues) by construction,
    // so off-diagonals vanish to eigensolver precision, and diagonals match.
    for i in 0..3 {
        for k in 0..3 {
            let mut cov = 0.0;
            for j in 0..t {
                cov += ys[(i, j)] * ys[(k, j)];
            }
            cov /= t as f64;
            let want = if i == k { b.eigenvalues[i] } else { 0.0 };
            assert!(
                (cov - want).abs() < 1e-8,
                "projected covariance ({i},{k}) = {cov}, want {want}"
            );
        }
    }
}

#[test]
fn full_basis_round_trip_recovers_input() {
    let mut rng = Rng::new(14);
    let xs = gaussian_samples(&[2.0, 1.5, 1.0, 0.8, 0.3], 64, &mut rng);
    let b = pca_fit(&xs).unwrap();
    for j in 0..10 {
        let x = column(&xs, j);
        let y = pca_project(&b, &x).unwrap();
        let back = reconstruct(&b, &y);
        assert!(max_gap(&back, &x[..]) < 1e-10, "round trip drift at col {j}");
    }
}

#[test]
fn projection_preserves_centered_norms() {
    let mut rng = Rng::new(15);
    let xs = gaussian_samples(&[1.0; 6], 128, &mut rng);
    let b = pca_fit(&xs).unwrap();
    for j in 0..16 {
        let x = column(&xs, j);
        let y = pca_project(&b, &x).unwrap();
        let centered: f64 = (0..6)
            .map(|i| (x[i] - b.mean[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let projected: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            (centered - projected).abs() < 1e-10,
            "isometry broken: {centered} vs {projected}"
        );
    }
}

#[test]
fn covariance_eigen_residual_is_small() {
    let mut rng = Rng::new(16);
    let xs = gaussian_samples(&[2.0, 1.4, 1.0, 0.6, 0.2], 300, &mut rng);
    let b = pca_fit(&xs).unwrap();
    // Rebuild the covariance independently (same 1/t normalization) and check
    // C u_c = eigenvalue_c * u_c column by column.
    let t = xs.cols as f64;
    let mut cov = Matrix::zeros(5, 5);
    for j in 0..xs.cols {
        for i in 0..5 {
            for k in 0..5 {
                cov[(i, k)] += (xs[(i, j)] - b.mean[i]) * (xs[(k, j)] - b.mean[k]);
            }
        }
    }
    cov.scale(1.0 / t);
    for c in 0..5 {
        let u = Vector::from_fn(5, |r| b.basis[(r, c)]);
        let cu = matvec(&cov, &u).unwrap();
        for r in 0..5 {
            let want = b.eigenvalues[c] * u[r];
            assert!(
                (cu[r] - want).abs() < 1e-8,
                "eigen residual at ({r},{c}): {} vs {}",
                cu[r],
                want
            );
        }
    }
}

#[test]
fn mean_matches_sample_mean() {
    let mut rng = Rng::new(17);
    let xs = gaussian_samples(&[3.0, 1.0, 0.5, 2.0], 50, &mut rng);
    let b = pca_fit(&xs).unwrap();
    for i in 0..4 {
        let m: f64 = (0..50).map(|j| xs[(i, j)]).sum::<f64>() / 50.0;
        assert!((b.mean[i] - m).abs() < 1e-12);
    }
}

#[test]
fn batch_projection_matches_per_sample() {
    let mut rng = Rng::new(18);
    let xs = gaussian_samples(&[1.5, 1.0, 0.7], 40, &mut rng);
    let b = pca_fit(&xs).unwrap();
    let batch = pca_project_batch(&b, &xs).unwrap();
    for j in 0..40 {
        let single = pca_project(&b, &column(&xs, j)).unwrap();
        let batch_col = column(&batch, j);
        assert!(max_gap(&single, &batch_col[..]) < 1e-12);
    }
}

#[test]
fn project_rejects_dim_mismatch() {
    let mut rng = Rng::new(19);
    let xs = gaussian_samples(&[1.0; 3], 20, &mut rng);
    let b = pca_fit(&xs).unwrap();
    assert!(pca_project(&b, &Vector::zeros(4)).is_err());
    assert!(pca_project_batch(&b, &Matrix::zeros(4, 2)).is_err());
}

#[test]
fn projection_is_transpose_application() {
    let mut rng = Rng::new(20);
    let xs = gaussian_samples(&[2.0, 1.0, 0.5, 0.25], 60, &mut rng);
    let b = pca_fit(&xs).unwrap();
    let x = column(&xs, 0);
    let centered = Vector::from_fn(4, |i| x[i] - b.mean[i]);
    let want = matvec_t(&b.basis, &centered).unwrap();
    let got = pca_project(&b, &x).unwrap();
    assert!(max_gap(&got, &want[..]) == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_trip_property(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let n = 2 + (seed % 5) as usize;
        let scales: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.5).collect();
        let xs = gaussian_samples(&scales, 3 * n + 10, &mut rng);
        let b = pca_fit(&xs).unwrap();
        let x = column(&xs, 0);
        let back = reconstruct(&b, &pca_project(&b, &x).unwrap());
        prop_assert!(max_gap(&back, &x[..]) < 1e-9);
    }
}
