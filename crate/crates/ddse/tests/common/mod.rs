//! Shared oracles and builders for the integration tests. Oracles here are
//! written independently of the library kernels (naive loops, closed forms)
//! so the two routes stay meaningful checks of each other.
#![allow(dead_code)]

use ddse::encoder::{Arch, EncoderModel};
use ddse::pca::{pca_fit, PcaBasis};
use ddse::{Matrix, Rng, Vector};

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!(
        (a - b).abs() <= tol,
        "{what}: {a} vs {b} (gap {:e}, tol {tol:e})",
        (a - b).abs()
    );
}

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch in max_gap");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Naive triple-loop product, the reference for every matmul variant.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows);
    Matrix::from_fn(a.rows, b.cols, |i, j| {
        let mut acc = 0.0;
        for l in 0..a.cols {
            acc += a.at(i, l) * b.at(l, j);
        }
        acc
    })
}

pub fn naive_matvec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    assert_eq!(a.cols, v.len());
    (0..a.rows)
        .map(|i| (0..a.cols).map(|j| a.at(i, j) * v[j]).sum())
        .collect()
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.normal())
}

pub fn random_vector(len: usize, scale: f64, rng: &mut Rng) -> Vector {
    Vector::from_fn(len, |_| scale * rng.normal())
}

/// Orthonormal basis with a small mean, obtained by fitting PCA to random
/// data; exercises the same object the encoder consumes in production.
pub fn random_basis(n: usize, rng: &mut Rng) -> PcaBasis {
    let samples = Matrix::from_fn(n, 4 * n + 8, |_, _| rng.normal());
    pca_fit(&samples).expect("pca_fit on random data")
}

/// Random model with smallish weights for forward/backward tests. Factorized
/// archs get dense (unprojected) w2/w3 so gradients are exercised on full
/// tensors; call `project_model` afterwards when constraints matter.
pub fn random_model(
    arch: Arch,
    n: usize,
    m: usize,
    k: usize,
    s: usize,
    classes: usize,
    per_coord: bool,
    drop_ratio: f64,
    rng: &mut Rng,
) -> EncoderModel {
    let w_scale = 0.7 / (m.max(n) as f64).sqrt();
    let thr_len = if per_coord { m } else { 1 };
    let (w2_list, w3_list, mm_list) = if arch.is_factorized() {
        (
            (0..k).map(|_| random_matrix(n, m, w_scale, rng)).collect(),
            (0..k).map(|_| random_matrix(m, n, w_scale, rng)).collect(),
            Vec::new(),
        )
    } else {
        (
            Vec::new(),
            Vec::new(),
            (0..k).map(|_| random_matrix(m, m, w_scale, rng)).collect(),
        )
    };
    let model = EncoderModel {
        arch,
        n,
        m,
        k,
        s,
        classes,
        w1: random_matrix(m, n, w_scale, rng),
        w2_list,
        w3_list,
        mm_list,
        thresholds: (0..=k)
            .map(|_| Vector::from_fn(thr_len, |_| 0.01 + 0.04 * rng.uniform()))
            .collect(),
        head_weight: random_matrix(classes, m, 1.0 / (m as f64).sqrt(), rng),
        head_bias: random_vector(classes, 0.1, rng),
        drop_ratio: if arch.uses_dropout() { drop_ratio } else { 0.0 },
        no_shortcut_reinject: false,
    };
    model.validate().expect("random model is well-formed");
    model
}
