//! Feasible-set projections: row-wise and column-wise top-s hard
//! thresholding, the Euclidean projection onto the per-slice ℓ₀ ball.

use crate::encoder::{Arch, EncoderModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Which axis of the matrix carries the cardinality budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

/// At most `s` nonzeros per row (or per column).
#[derive(Debug, Clone, Copy)]
pub struct CardinalityConstraint {
    pub axis: Axis,
    pub s: usize,
}

/// Per-tensor outcome of a constraint check.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub tensor: String,
    pub axis: Axis,
    pub limit: usize,
    pub max_count: usize,
    pub worst_slice: usize,
    pub pass: bool,
}

/// Aggregated constraint report for a model.
#[derive(Debug, Clone)]
pub struct ConstraintReport {
    pub checks: Vec<TensorCheck>,
    pub pass: bool,
}

impl std::fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{}: {} {} nnz max {} (limit {}) at slice {}",
                c.tensor,
                if c.pass { "pass" } else { "FAIL" },
                match c.axis {
                    Axis::Row => "row",
                    Axis::Column => "column",
                },
                c.max_count,
                c.limit,
                c.worst_slice,
            )?;
        }
        write!(f, "overall: {}", if self.pass { "pass" } else { "FAIL" })
    }
}

/// Indices of the s largest-magnitude entries of a slice, ties broken toward
/// the lower index so results are identical across platforms.
fn top_s_indices(slice: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..slice.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        slice[b]
            .abs()
            .total_cmp(&slice[a].abs())
            .then(a.cmp(&b))
    });
    idx.truncate(s);
    idx
}

/// Keeps the s largest-magnitude entries per constrained slice verbatim and
/// zeros the rest.
pub fn project_topk(w: &Matrix, constraint: &CardinalityConstraint) -> Result<Matrix> {
    let axis_len = match constraint.axis {
        Axis::Row => w.cols,
        Axis::Column => w.rows,
    };
    if constraint.s < 1 {
        return Err(Error::contract("project_topk", "s must be >= 1"));
    }
    if constraint.s > axis_len {
        return Err(Error::contract(
            "project_topk",
            format!("s = {} exceeds axis length {}", constraint.s, axis_len),
        ));
    }
    if constraint.s == axis_len {
        return Ok(w.clone());
    }
    let mut out = Matrix::zeros(w.rows, w.cols);
    match constraint.axis {
        Axis::Row => {
            for i in 0..w.rows {
                let row = w.row(i);
                for j in top_s_indices(row, constraint.s) {
                    out.set(i, j, row[j]);
                }
            }
        }
        Axis::Column => {
            let mut buf = vec![0.0; w.rows];
            for j in 0..w.cols {
                for i in 0..w.rows {
                    buf[i] = w.at(i, j);
                }
                for i in top_s_indices(&buf, constraint.s) {
                    out.set(i, j, buf[i]);
                }
            }
        }
    }
    Ok(out)
}

fn max_slice_nnz(w: &Matrix, axis: Axis) -> (usize, usize) {
    let (slices, len) = match axis {
        Axis::Row => (w.rows, w.cols),
        Axis::Column => (w.cols, w.rows),
    };
    let mut max_count = 0;
    let mut worst = 0;
    for s in 0..slices {
        let count = (0..len)
            .filter(|&i| match axis {
                Axis::Row => w.at(s, i) != 0.0,
                Axis::Column => w.at(i, s) != 0.0,
            })
            .count();
        if count > max_count {
            max_count = count;
            worst = s;
        }
    }
    (max_count, worst)
}

/// Verifies the cardinality constraints on every constrained tensor: each row
/// of w1 and of every w3 at most s nonzeros, each column of every w2 at most
/// s nonzeros.
pub fn check_constraints(model: &EncoderModel) -> Result<ConstraintReport> {
    if !matches!(model.arch, Arch::Ddse | Arch::NoShortcut) {
        return Err(Error::contract(
            "check_constraints",
            format!("architecture {} carries no cardinality constraints", model.arch.tag()),
        ));
    }
    let s = model.s;
    let mut checks = Vec::new();
    let mut push = |tensor: String, axis: Axis, w: &Matrix| {
        let (max_count, worst_slice) = max_slice_nnz(w, axis);
        checks.push(TensorCheck {
            tensor,
            axis,
            limit: s,
            max_count,
            worst_slice,
            pass: max_count <= s,
        });
    };
    push("w1".to_string(), Axis::Row, &model.w1);
    for (i, w) in model.w2_list.iter().enumerate() {
        push(format!("w2[{i}]"), Axis::Column, w);
    }
    for (i, w) in model.w3_list.iter().enumerate() {
        push(format!("w3[{i}]"), Axis::Row, w);
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ConstraintReport { checks, pass })
}

/// Projects all constrained tensors of a model in place; no-op for
/// unconstrained architectures.
pub fn project_model(model: &mut EncoderModel) -> Result<()> {
    if !matches!(model.arch, Arch::Ddse | Arch::NoShortcut) {
        return Ok(());
    }
    let row = CardinalityConstraint {
        axis: Axis::Row,
        s: model.s,
    };
    let col = CardinalityConstraint {
        axis: Axis::Column,
        s: model.s,
    };
    model.w1 = project_topk(&model.w1, &row)?;
    for w in &mut model.w2_list {
        *w = project_topk(w, &col)?;
    }
    for w in &mut model.w3_list {
        *w = project_topk(w, &row)?;
    }
    Ok(())
}
