//! Dense matrix/vector arithmetic: the substrate for every layer operation.
//!
//! Matrices are row-major 64-bit floats. 64-bit precision is required
//! throughout because gradient verification targets ~1e-4 relative error,
//! which single precision cannot reach. The eigendecomposition is a cyclic
//! Jacobi implemented here rather than an external solver: problem sizes stay
//! at or below 784x784.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense row-major matrix. `data.len() == rows * cols` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Dense vector; dereferences to its element slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    pub data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> f64) -> Self {
        Vector {
            data: (0..len).map(f).collect(),
        }
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{}x{} needs {} entries, got {}", rows, cols, rows * cols, data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::contract("Matrix::new", "non-finite entry"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Entries drawn i.i.d. standard normal.
    pub fn random_normal(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.normal()).collect();
        Matrix { rows, cols, data }
    }

    /// Entries drawn i.i.d. uniform on [lo, hi).
    pub fn random_uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform_in(lo, hi)).collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    /// self += alpha * other; shapes must agree.
    pub fn add_scaled(&mut self, other: &Matrix, alpha: f64) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "add_scaled shape mismatch"
        );
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += alpha * o;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// a * b. The inner loop runs over rows of b so accesses stay contiguous;
/// exact zeros in a are skipped, which pays off on hard-thresholded weights.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("{}x{} * {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// aᵀ * b without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape(
            "matmul_tn",
            format!("{}x{}ᵀ * {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let arow = a.row(k);
        let brow = &b.data[k * b.cols..(k + 1) * b.cols];
        for (i, &aki) in arow.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// a * bᵀ without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "matmul_nt",
            format!("{}x{} * {}x{}ᵀ", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (j, o) in orow.iter_mut().enumerate() {
            *o = dot(arow, b.row(j));
        }
    }
    Ok(out)
}

pub fn matvec(a: &Matrix, v: &Vector) -> Result<Vector> {
    if a.cols != v.len() {
        return Err(Error::shape(
            "matvec",
            format!("{}x{} * len {}", a.rows, a.cols, v.len()),
        ));
    }
    let out = (0..a.rows).map(|i| dot(a.row(i), v)).collect();
    Ok(Vector::new(out))
}

/// aᵀ * v without materializing the transpose.
pub fn matvec_t(a: &Matrix, v: &Vector) -> Result<Vector> {
    if a.rows != v.len() {
        return Err(Error::shape(
            "matvec_t",
            format!("{}x{}ᵀ * len {}", a.rows, a.cols, v.len()),
        ));
    }
    let mut out = vec![0.0; a.cols];
    for i in 0..a.rows {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for (o, &aij) in out.iter_mut().zip(a.row(i)) {
            *o += aij * vi;
        }
    }
    Ok(Vector::new(out))
}

const SPECTRAL_TOL: f64 = 1e-10;
const SPECTRAL_MAX_ITER: usize = 10_000;

/// Largest singular value via power iteration on aᵀa. The start vector comes
/// from a fixed-seed generator so results are reproducible.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::contract("spectral_norm", "empty matrix"));
    }
    if a.data.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let mut rng = Rng::new(0x5eed_cafe_f00d_0001);
    let mut v = Vector::from_fn(a.cols, |_| rng.normal());
    let nv = norm2(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut sigma = 0.0_f64;
    for it in 0..SPECTRAL_MAX_ITER {
        let av = matvec(a, &v)?;
        let mut w = matvec_t(a, &av)?;
        let nw = norm2(&w);
        if nw == 0.0 {
            // v landed in the null space; redraw and continue.
            for x in v.iter_mut() {
                *x = rng.normal();
            }
            let nv = norm2(&v);
            for x in v.iter_mut() {
                *x /= nv;
            }
            continue;
        }
        for x in w.iter_mut() {
            *x /= nw;
        }
        let next = norm2(&matvec(a, &w)?);
        v = w;
        if it > 0 && (next - sigma).abs() <= SPECTRAL_TOL * next.max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        sigma = next;
    }
    Err(Error::NoConvergence {
        op: "spectral_norm",
        iterations: SPECTRAL_MAX_ITER,
        last_estimate: sigma,
    })
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues descending, column-orthonormal eigenvector matrix).
pub fn symmetric_eigh(a: &Matrix) -> Result<(Vector, Matrix)> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::shape("symmetric_eigh", format!("{}x{}", a.rows, a.cols)));
    }
    let sym_tol = 1e-10 * (1.0 + a.max_abs());
    for i in 0..n {
        for j in (i + 1)..n {
            if (a.at(i, j) - a.at(j, i)).abs() > sym_tol {
                return Err(Error::contract(
                    "symmetric_eigh",
                    format!("asymmetric at ({i},{j}): {} vs {}", a.at(i, j), a.at(j, i)),
                ));
            }
        }
    }
    let mut w = a.clone();
    // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (w.at(i, j) + w.at(j, i));
            w.set(i, j, m);
            w.set(j, i, m);
        }
    }
    let mut q = Matrix::identity(n);
    let target = 1e-14 * w.frob_norm().max(f64::MIN_POSITIVE);
    let mut converged = false;
    let mut off = off_norm(&w);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for qq in (p + 1)..n {
                jacobi_rotate(&mut w, &mut q, p, qq);
            }
        }
        off = off_norm(&w);
    }
    if !converged && off > target {
        return Err(Error::NoConvergence {
            op: "symmetric_eigh",
            iterations: JACOBI_MAX_SWEEPS,
            last_estimate: off,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w.at(j, j).partial_cmp(&w.at(i, i)).unwrap());
    let eigenvalues = Vector::new(order.iter().map(|&i| w.at(i, i)).collect());
    let mut vectors = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, new_j, q.at(i, old_j));
        }
    }
    Ok((eigenvalues, vectors))
}

fn off_norm(a: &Matrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.at(i, j) * a.at(i, j);
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing w[p][q]; accumulates the rotation into q_acc.
fn jacobi_rotate(w: &mut Matrix, q_acc: &mut Matrix, p: usize, q: usize) {
    let n = w.rows;
    let apq = w.at(p, q);
    if apq == 0.0 {
        return;
    }
    let app = w.at(p, p);
    let aqq = w.at(q, q);
    let tau = (aqq - app) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        1.0 / (tau - (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // Row update: rows p and q of w get the Jᵀ combination.
    {
        let (lo, hi) = w.data.split_at_mut(q * n);
        let rp = &mut lo[p * n..p * n + n];
        let rq = &mut hi[..n];
        for k in 0..n {
            let wpk = rp[k];
            let wqk = rq[k];
            rp[k] = c * wpk - s * wqk;
            rq[k] = s * wpk + c * wqk;
        }
    }
    // Column update: columns p and q of w get the J combination.
    for k in 0..n {
        let wkp = w.data[k * n + p];
        let wkq = w.data[k * n + q];
        w.data[k * n + p] = c * wkp - s * wkq;
        w.data[k * n + q] = s * wkp + c * wkq;
    }
    for k in 0..n {
        let qkp = q_acc.data[k * n + p];
        let qkq = q_acc.data[k * n + q];
        q_acc.data[k * n + p] = c * qkp - s * qkq;
        q_acc.data[k * n + q] = s * qkp + c * qkq;
    }
}
