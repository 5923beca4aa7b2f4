//! `solve`: run the ISTA oracle on a dictionary and signal read from CSV.
//! The run directory receives the final code, the per-iteration objectives,
//! and the normalized dictionary actually used, so the final objective can
//! be recomputed exactly from the artifacts alone.

use crate::{util, SolveArgs};
use ddse::linalg::{Matrix, Vector};
use ddse::sparse_coding::{ista_solve, SparseCodingProblem};
use ddse::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

fn parse_numbers(path: &Path, text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for token in text.split(|c: char| c == ',' || c.is_whitespace()) {
        if token.is_empty() {
            continue;
        }
        let v: f64 = token.parse().map_err(|_| {
            Error::config(format!("{}: '{token}' is not a number", path.display()))
        })?;
        out.push(v);
    }
    Ok(out)
}

/// CSV matrix: one row per line, comma-separated, every row equal length.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_numbers(path, line)?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::config(format!(
                    "{}: row {} has {} entries, expected {}",
                    path.display(),
                    rows.len() + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::config(format!("{}: empty matrix", path.display())));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn read_vector_file(path: &Path) -> Result<Vector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let values = parse_numbers(path, &text)?;
    if values.is_empty() {
        return Err(Error::config(format!("{}: empty vector", path.display())));
    }
    Ok(Vector::new(values))
}

fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows {
        for j in 0..m.cols {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", m.at(i, j)).expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let dict = read_matrix_csv(&args.dict)?;
    let x = read_vector_file(&args.input)?;
    let problem = SparseCodingProblem::new(dict, args.lambda)?;
    let trace = ista_solve(&problem, &x, args.max_iter, args.tol)?;

    util::ensure_dir(&args.out)?;
    let code = trace.iterates.last().expect("ista_solve returns z0 at least");
    let mut code_csv = String::new();
    for v in code.iter() {
        writeln!(code_csv, "{v}").expect("string write");
    }
    util::write_file(&args.out.join("code.csv"), &code_csv)?;

    let mut obj_csv = String::from("iteration,objective\n");
    for (i, obj) in trace.objective_values.iter().enumerate() {
        writeln!(obj_csv, "{i},{obj}").expect("string write");
    }
    util::write_file(&args.out.join("objectives.csv"), &obj_csv)?;
    util::write_file(
        &args.out.join("dict_normalized.csv"),
        &matrix_csv(problem.dict()),
    )?;

    let final_obj = trace.objective_values.last().expect("nonempty objectives");
    let nnz = code.iter().filter(|&&v| v != 0.0).count();
    println!(
        "converged={} iterations={} objective={final_obj} nnz={nnz}",
        trace.converged, trace.iterations_used
    );
    println!("artifacts: {}", args.out.display());
    Ok(())
}
