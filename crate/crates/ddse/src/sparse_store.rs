//! Compressed sparse-row weight storage and the sparse inference path.
//!
//! Row-constrained tensors (w1, w3) map directly onto CSR; the
//! column-constrained w2 is stored as the CSR of its transpose and applied
//! with a transposed matvec, so every kernel walks contiguous rows.

use crate::encoder::{shrink_layer, Arch, EncoderModel};
use crate::error::{Error, Result};
use crate::linalg::{matvec, Matrix, Vector};
use crate::pca::{pca_project, PcaBasis};
use std::time::Instant;

/// CSR matrix; zeros are dropped exactly, so dense round-trips are lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_dense(dense: &Matrix) -> SparseMatrix {
        let mut row_offsets = Vec::with_capacity(dense.rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..dense.rows {
            for (j, &v) in dense.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            rows: dense.rows,
            cols: dense.cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for idx in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.set(i, self.col_indices[idx], self.values[idx]);
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        *self.row_offsets.last().expect("offsets nonempty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.row_offsets.len() != self.rows + 1 || self.row_offsets[0] != 0 {
            return Err(Error::contract("sparse_matrix", "row_offsets malformed"));
        }
        let nnz = self.row_offsets[self.rows];
        if self.col_indices.len() != nnz || self.values.len() != nnz {
            return Err(Error::contract(
                "sparse_matrix",
                "index/value lengths disagree with row_offsets",
            ));
        }
        for i in 0..self.rows {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::contract("sparse_matrix", "row_offsets decrease"));
            }
            let mut prev: Option<usize> = None;
            for idx in lo..hi {
                let c = self.col_indices[idx];
                if c >= self.cols {
                    return Err(Error::contract("sparse_matrix", "column index out of range"));
                }
                if let Some(p) = prev {
                    if c <= p {
                        return Err(Error::contract(
                            "sparse_matrix",
                            "column indices not strictly increasing within a row",
                        ));
                    }
                }
                prev = Some(c);
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("sparse_matrix", "non-finite value"));
        }
        Ok(())
    }
}

/// w * v touching exactly nnz stored entries.
pub fn sparse_matvec(w: &SparseMatrix, v: &[f64]) -> Result<Vector> {
    if w.cols != v.len() {
        return Err(Error::shape(
            "sparse_matvec",
            format!("matrix is {}x{}, vector has length {}", w.rows, w.cols, v.len()),
        ));
    }
    let mut out = Vector::zeros(w.rows);
    for i in 0..w.rows {
        let mut acc = 0.0;
        for idx in w.row_offsets[i]..w.row_offsets[i + 1] {
            acc += w.values[idx] * v[w.col_indices[idx]];
        }
        out[i] = acc;
    }
    Ok(out)
}

/// w^T * v; the row-major walk scatters into the output.
pub fn sparse_matvec_t(w: &SparseMatrix, v: &[f64]) -> Result<Vector> {
    if w.rows != v.len() {
        return Err(Error::shape(
            "sparse_matvec_t",
            format!("matrix is {}x{}, vector has length {}", w.rows, w.cols, v.len()),
        ));
    }
    let mut out = Vector::zeros(w.cols);
    for i in 0..w.rows {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for idx in w.row_offsets[i]..w.row_offsets[i + 1] {
            out[w.col_indices[idx]] += w.values[idx] * vi;
        }
    }
    Ok(out)
}

/// Inference-only encoder with every weight tensor in CSR form.
#[derive(Debug, Clone)]
pub struct CompiledEncoder {
    pub arch: Arch,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub classes: usize,
    pub w1: SparseMatrix,
    /// CSR of each w2's transpose (m x n), applied via `sparse_matvec_t`.
    pub w2t_list: Vec<SparseMatrix>,
    pub w3_list: Vec<SparseMatrix>,
    pub mm_list: Vec<SparseMatrix>,
    pub thresholds: Vec<Vector>,
    pub head_weight: Matrix,
    pub head_bias: Vector,
    pub drop_ratio: f64,
    pub no_shortcut_reinject: bool,
    pub basis: Option<PcaBasis>,
}

impl CompiledEncoder {
    /// Stored nonzeros across all weight tensors, excluding the dense head.
    pub fn weight_nnz(&self) -> usize {
        self.w1.nnz()
            + self.w2t_list.iter().map(SparseMatrix::nnz).sum::<usize>()
            + self.w3_list.iter().map(SparseMatrix::nnz).sum::<usize>()
            + self.mm_list.iter().map(SparseMatrix::nnz).sum::<usize>()
    }
}

/// Lossless conversion to the sparse inference form.
pub fn compress(model: &EncoderModel, basis: Option<&PcaBasis>) -> Result<CompiledEncoder> {
    model.validate()?;
    if model.arch.uses_pca() && basis.is_none() {
        return Err(Error::contract(
            "compress",
            format!("{} needs a PCA basis", model.arch.tag()),
        ));
    }
    Ok(CompiledEncoder {
        arch: model.arch,
        n: model.n,
        m: model.m,
        k: model.k,
        s: model.s,
        classes: model.classes,
        w1: SparseMatrix::from_dense(&model.w1),
        w2t_list: model
            .w2_list
            .iter()
            .map(|w| SparseMatrix::from_dense(&w.transpose()))
            .collect(),
        w3_list: model.w3_list.iter().map(SparseMatrix::from_dense).collect(),
        mm_list: model.mm_list.iter().map(SparseMatrix::from_dense).collect(),
        thresholds: model.thresholds.clone(),
        head_weight: model.head_weight.clone(),
        head_bias: model.head_bias.clone(),
        drop_ratio: model.drop_ratio,
        no_shortcut_reinject: model.no_shortcut_reinject,
        basis: basis.cloned(),
    })
}

/// Eval-mode forward through the sparse path; returns the final code and
/// the logits.
pub fn compiled_forward(ce: &CompiledEncoder, x: &Vector) -> Result<(Vector, Vector)> {
    if x.len() != ce.n {
        return Err(Error::shape(
            "compiled_forward",
            format!("input has length {}, model expects {}", x.len(), ce.n),
        ));
    }
    let x_in: Vector;
    let x_ref: &Vector = if ce.arch.uses_pca() {
        let basis = ce.basis.as_ref().ok_or_else(|| {
            Error::contract("compiled_forward", format!("{} needs a PCA basis", ce.arch.tag()))
        })?;
        x_in = pca_project(basis, x)?;
        &x_in
    } else {
        x
    };
    let keep = 1.0 - ce.drop_ratio;
    let scale_active = ce.arch.uses_dropout() && ce.drop_ratio > 0.0;

    let mut a0 = sparse_matvec(&ce.w1, x_ref)?;
    if scale_active && ce.arch == Arch::FcDropconnect {
        for v in a0.iter_mut() {
            *v *= keep;
        }
    }
    let mut pre = a0.clone();
    if scale_active && ce.arch == Arch::Lista {
        for v in pre.iter_mut() {
            *v *= keep;
        }
    }
    let mut z = shrink_layer(&pre, &ce.thresholds[0]);
    if scale_active && ce.arch == Arch::FcDropout {
        for v in z.iter_mut() {
            *v *= keep;
        }
    }

    for j in 0..ce.k {
        pre = match ce.arch {
            Arch::Ddse | Arch::NoShortcut => {
                let u = sparse_matvec_t(&ce.w2t_list[j], &z)?;
                let w3u = sparse_matvec(&ce.w3_list[j], &u)?;
                if ce.arch == Arch::Ddse {
                    Vector::from_fn(ce.m, |i| a0[i] + z[i] - w3u[i])
                } else if ce.no_shortcut_reinject {
                    Vector::from_fn(ce.m, |i| a0[i] - w3u[i])
                } else {
                    w3u
                }
            }
            Arch::Lista => {
                let mz = sparse_matvec(&ce.mm_list[j], &z)?;
                let mut p = Vector::from_fn(ce.m, |i| a0[i] + mz[i]);
                if scale_active {
                    for v in p.iter_mut() {
                        *v *= keep;
                    }
                }
                p
            }
            Arch::FcPlain | Arch::FcDropout | Arch::FcDropconnect => {
                let mut mz = sparse_matvec(&ce.mm_list[j], &z)?;
                if scale_active && ce.arch == Arch::FcDropconnect {
                    for v in mz.iter_mut() {
                        *v *= keep;
                    }
                }
                mz
            }
        };
        z = shrink_layer(&pre, &ce.thresholds[j + 1]);
        if scale_active && ce.arch == Arch::FcDropout {
            for v in z.iter_mut() {
                *v *= keep;
            }
        }
    }

    let mut logits = matvec(&ce.head_weight, &z)?;
    for (l, b) in logits.iter_mut().zip(ce.head_bias.iter()) {
        *l += b;
    }
    Ok((z, logits))
}

/// Operation counts behind the complexity claim: sparse path (2k+1)sm,
/// dense path mn + km^2.
pub fn theoretical_op_counts(n: usize, m: usize, k: usize, s: usize) -> (usize, usize) {
    ((2 * k + 1) * s * m, m * n + k * m * m)
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub samples: usize,
    pub repeats: usize,
    pub sparse_us_per_sample: f64,
    pub dense_us_per_sample: f64,
    pub measured_ratio: f64,
    pub sparse_ops: usize,
    pub dense_ops: usize,
    pub theoretical_ratio: f64,
    pub max_logit_gap: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Times the sparse and dense inference paths over the sample columns and
/// verifies they agree within 1e-10. Wall-clock numbers are reported, never
/// asserted.
pub fn bench_inference(
    compiled: &CompiledEncoder,
    dense: &EncoderModel,
    basis: Option<&PcaBasis>,
    samples: &Matrix,
    repeats: usize,
) -> Result<BenchReport> {
    if repeats < 3 {
        return Err(Error::contract("bench_inference", "repeats must be at least 3"));
    }
    if samples.cols == 0 {
        return Err(Error::contract("bench_inference", "no samples"));
    }
    if samples.rows != dense.n {
        return Err(Error::shape(
            "bench_inference",
            format!("samples have {} rows, model expects {}", samples.rows, dense.n),
        ));
    }
    let columns: Vec<Vector> = (0..samples.cols)
        .map(|j| Vector::from_fn(samples.rows, |i| samples.at(i, j)))
        .collect();

    let mut max_gap = 0.0f64;
    for x in &columns {
        let (_, sparse_logits) = compiled_forward(compiled, x)?;
        let trace = crate::encoder::forward(dense, basis, x, false, None)?;
        for (a, b) in sparse_logits.iter().zip(trace.logits.iter()) {
            max_gap = max_gap.max((a - b).abs());
        }
    }
    if max_gap > 1e-10 {
        return Err(Error::contract(
            "bench_inference",
            format!("sparse and dense outputs disagree: max gap {max_gap:e}"),
        ));
    }

    let mut sparse_times = Vec::with_capacity(repeats);
    let mut dense_times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        for x in &columns {
            let _ = compiled_forward(compiled, x)?;
        }
        sparse_times.push(t0.elapsed().as_secs_f64() * 1e6 / columns.len() as f64);
        let t1 = Instant::now();
        for x in &columns {
            let _ = crate::encoder::forward(dense, basis, x, false, None)?;
        }
        dense_times.push(t1.elapsed().as_secs_f64() * 1e6 / columns.len() as f64);
    }
    let sparse_med = median(sparse_times);
    let dense_med = median(dense_times);
    let (sparse_ops, dense_ops) = theoretical_op_counts(dense.n, dense.m, dense.k, dense.s);
    Ok(BenchReport {
        samples: columns.len(),
        repeats,
        sparse_us_per_sample: sparse_med,
        dense_us_per_sample: dense_med,
        measured_ratio: sparse_med / dense_med,
        sparse_ops,
        dense_ops,
        theoretical_ratio: sparse_ops as f64 / dense_ops as f64,
        max_logit_gap: max_gap,
    })
}
