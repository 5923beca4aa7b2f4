//! Classical sparse coding via ISTA: minimize ½‖x − Dz‖² + λ‖z‖₁.
//!
//! This is the ground-truth oracle the unrolled encoders are validated
//! against. The dictionary is normalized to unit spectral norm at
//! construction, which makes ISTA's implicit unit step size valid.

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, matvec, matvec_t, spectral_norm, Matrix, Vector};

/// An instance of the ℓ₁-regularized least-squares problem.
/// The dictionary held here always has spectral norm 1 within 1e-6.
#[derive(Debug, Clone)]
pub struct SparseCodingProblem {
    dict: Matrix,
    lambda: f64,
}

/// Iterate history of one `ista_solve` call. `iterates[0]` is z⁰ = 0 and
/// `objective_values[i]` is the exact objective at `iterates[i]`.
#[derive(Debug, Clone)]
pub struct IstaTrace {
    pub iterates: Vec<Vector>,
    pub objective_values: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl SparseCodingProblem {
    /// Builds a problem, dividing the dictionary by its spectral norm unless
    /// it is already unit-norm within 1e-6 (so pre-normalized dictionaries
    /// round-trip bit-exactly).
    pub fn new(mut dict: Matrix, lambda: f64) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::contract(
                "SparseCodingProblem::new",
                format!("lambda must be finite and nonnegative, got {lambda}"),
            ));
        }
        let sigma = spectral_norm(&dict)?;
        if sigma == 0.0 {
            return Err(Error::contract(
                "SparseCodingProblem::new",
                "zero dictionary cannot be normalized",
            ));
        }
        if (sigma - 1.0).abs() > 1e-6 {
            dict.scale(1.0 / sigma);
        }
        Ok(SparseCodingProblem { dict, lambda })
    }

    pub fn dict(&self) -> &Matrix {
        &self.dict
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Signal dimension n.
    pub fn n(&self) -> usize {
        self.dict.rows
    }

    /// Code dimension m.
    pub fn m(&self) -> usize {
        self.dict.cols
    }

    /// Exact objective ½‖x − Dz‖² + λ‖z‖₁.
    pub fn objective(&self, x: &Vector, z: &Vector) -> Result<f64> {
        let dz = matvec(&self.dict, z)?;
        if x.len() != dz.len() {
            return Err(Error::shape(
                "objective",
                format!("x has len {}, D z has len {}", x.len(), dz.len()),
            ));
        }
        let residual: f64 = x.iter().zip(dz.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let l1: f64 = z.iter().map(|v| v.abs()).sum();
        Ok(0.5 * residual + self.lambda * l1)
    }
}

/// Element-wise soft shrinkage: out_i = sign(u_i)·max(|u_i| − λ, 0).
pub fn soft_shrink(u: &Vector, lambda: f64) -> Result<Vector> {
    if lambda < 0.0 {
        return Err(Error::contract(
            "soft_shrink",
            format!("negative lambda {lambda}"),
        ));
    }
    Ok(Vector::new(
        u.iter()
            .map(|&v| v.signum() * (v.abs() - lambda).max(0.0))
            .collect(),
    ))
}

/// One ISTA update: z⁺ = 𝒩(Dᵀx + z − Dᵀ(Dz); λ).
pub fn ista_step(problem: &SparseCodingProblem, x: &Vector, z: &Vector) -> Result<Vector> {
    if x.len() != problem.n() {
        return Err(Error::shape(
            "ista_step",
            format!("x has len {}, dictionary has {} rows", x.len(), problem.n()),
        ));
    }
    if z.len() != problem.m() {
        return Err(Error::shape(
            "ista_step",
            format!("z has len {}, dictionary has {} cols", z.len(), problem.m()),
        ));
    }
    let dtx = matvec_t(&problem.dict, x)?;
    let dz = matvec(&problem.dict, z)?;
    let dtdz = matvec_t(&problem.dict, &dz)?;
    let u = Vector::from_fn(problem.m(), |i| dtx[i] + z[i] - dtdz[i]);
    soft_shrink(&u, problem.lambda)
}

/// Runs ISTA from z⁰ = 0 until the ℓ∞ change drops below `tol` or `max_iter`
/// steps have been taken. A bit-identical iterate is an exact fixed point in
/// floating point, so iteration also stops there: every further step would
/// reproduce the same vector.
pub fn ista_solve(
    problem: &SparseCodingProblem,
    x: &Vector,
    max_iter: usize,
    tol: f64,
) -> Result<IstaTrace> {
    if max_iter < 1 {
        return Err(Error::contract("ista_solve", "max_iter must be >= 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::contract(
            "ista_solve",
            format!("tol must be positive, got {tol}"),
        ));
    }
    let mut z = Vector::zeros(problem.m());
    let mut iterates = vec![z.clone()];
    let mut objective_values = vec![problem.objective(x, &z)?];
    let mut converged = false;
    let mut iterations_used = 0;
    for _ in 0..max_iter {
        let next = ista_step(problem, x, &z)?;
        iterations_used += 1;
        let change = inf_norm(&Vector::from_fn(next.len(), |i| next[i] - z[i]));
        let fixed_point = next.data == z.data;
        z = next;
        iterates.push(z.clone());
        objective_values.push(problem.objective(x, &z)?);
        if change < tol || fixed_point {
            converged = true;
            break;
        }
    }
    Ok(IstaTrace {
        iterates,
        objective_values,
        converged,
        iterations_used,
    })
}
