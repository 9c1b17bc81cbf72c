//! Preconditioned conjugate gradients and a damped Newton method for the
//! discrete semilinear system.

use std::sync::Arc;

use log::debug;
use serde::Serialize;
use thiserror::Error;

use crate::assembly::{apply_dirichlet, assemble_reaction_jacobian, AssemblyError, DiscreteSystem, FemFunction};
use crate::mesh::Mesh;
use crate::problems::Problem;
use crate::quadrature::QuadratureRule;
use crate::sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, best: Vec<f64> },
    #[error("line search stalled at iteration {iteration}: step below {min_step:e} (residual {residual:e})")]
    LineSearchStall { iteration: usize, min_step: f64, residual: f64 },
    #[error("breakdown: matrix is not positive definite (p^T A p = {0:e})")]
    Breakdown(f64),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PcgOptions {
    /// Stop once `||b - A x||_2 <= rtol ||b||_2`.
    pub rtol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl Default for PcgOptions {
    fn default() -> Self {
        PcgOptions { rtol: 1e-10, max_iters: 20_000, preconditioner: Preconditioner::Jacobi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves `A x = rhs` for symmetric positive definite `A`.
pub fn pcg_solve(
    a: &SparseMatrix,
    rhs: &[f64],
    x0: Option<&[f64]>,
    opts: &PcgOptions,
) -> Result<(Vec<f64>, LinearReport), SolverError> {
    let n = a.n();
    assert_eq!(rhs.len(), n);
    let inv_diag: Vec<f64> = match opts.preconditioner {
        Preconditioner::Jacobi => a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect(),
        Preconditioner::None => vec![1.0; n],
    };
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let b_norm = norm2(rhs);
    if b_norm == 0.0 {
        let report = LinearReport { iterations: 0, relative_residual: 0.0, converged: true };
        return Ok((vec![0.0; n], report));
    }
    let mut r: Vec<f64> = rhs.iter().zip(a.mul_vec(&x)).map(|(b, ax)| b - ax).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let target = opts.rtol * b_norm;
    let mut res = norm2(&r);

    let mut iterations = 0;
    while res > target {
        if iterations == opts.max_iters {
            return Err(SolverError::NoConvergence { iterations, residual: res / b_norm, best: x });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolverError::Breakdown(pap));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm2(&r);
        iterations += 1;
    }
    Ok((x, LinearReport { iterations, relative_residual: res / b_norm, converged: true }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonOptions {
    /// Converged once the residual sup-norm is at most `abs_tol` ...
    pub abs_tol: f64,
    /// ... or at most `rel_tol` times the initial residual sup-norm.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Smallest step length the halving line search may try.
    pub min_step: f64,
    /// Floor of the relative tolerance handed to the inner linear solver.
    pub linear_rtol_floor: f64,
    pub linear_max_iters: usize,
    pub preconditioner: Preconditioner,
    pub quadrature: QuadratureRule,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-13,
            max_iters: 50,
            min_step: 1.0 / 1024.0,
            linear_rtol_floor: 1e-12,
            linear_max_iters: 50_000,
            preconditioner: Preconditioner::Jacobi,
            quadrature: QuadratureRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Residual sup-norm before the first and after every accepted step.
    pub residual_history: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub converged: bool,
    pub linear_iters_total: usize,
}

/// Damped Newton iteration for `F(u) = 0` with
/// `<F(u), v> = a(u, v) + (b(u), v) - <load, v>` and Jacobian
/// `<F'(u) w, v> = a(w, v) + (b'(u) w, v)`.
///
/// Dirichlet values are written into the initial iterate and kept fixed.
/// Each step is halved until the residual sup-norm does not increase.
pub fn newton_solve(
    mesh: &Arc<Mesh>,
    problem: &Problem,
    initial: FemFunction,
    opts: &NewtonOptions,
) -> Result<(FemFunction, SolveReport), SolverError> {
    assert!(Arc::ptr_eq(initial.mesh(), mesh), "initial iterate lives on another mesh");
    let quad = &opts.quadrature;
    let system = DiscreteSystem::new(mesh, problem, quad)?;
    let b = problem.nonlinearity.as_ref();
    let homogeneous: Vec<(usize, f64)> = system.constraints.iter().map(|&(i, _)| (i, 0.0)).collect();

    let mut u = initial;
    for &(i, g) in &system.constraints {
        u.coefficients_mut()[i] = g;
    }
    let mut r = system.residual(&u, problem, quad);
    let mut r_sup = sup(&r);
    let target = opts.abs_tol.max(opts.rel_tol * r_sup);
    let mut report = SolveReport {
        iterations: 0,
        residual_history: vec![r_sup],
        step_lengths: Vec::new(),
        converged: false,
        linear_iters_total: 0,
    };
    debug!("iter 0 resid {r_sup:e} lin_iters 0");

    while r_sup > target {
        if report.iterations == opts.max_iters {
            return Err(SolverError::NoConvergence {
                iterations: report.iterations,
                residual: r_sup,
                best: u.into_coefficients(),
            });
        }
        let jac = system.stiffness.add(&assemble_reaction_jacobian(mesh, &u, |s, v| b.d1(s, v), quad));
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let (jac, rhs) = apply_dirichlet(jac, neg_r, &homogeneous);
        // Solve just accurately enough for a full step to meet the target.
        let rtol = (0.1 * target / norm2(&r)).clamp(opts.linear_rtol_floor, 1e-2);
        let lin_opts = PcgOptions { rtol, max_iters: opts.linear_max_iters, preconditioner: opts.preconditioner };
        let (delta, lin) = pcg_solve(&jac, &rhs, None, &lin_opts)?;
        report.linear_iters_total += lin.iterations;

        let mut step = 1.0;
        loop {
            let mut trial = u.clone();
            for (t, d) in trial.coefficients_mut().iter_mut().zip(&delta) {
                *t += step * d;
            }
            let r_trial = system.residual(&trial, problem, quad);
            let trial_sup = sup(&r_trial);
            if trial_sup <= r_sup {
                u = trial;
                r = r_trial;
                r_sup = trial_sup;
                break;
            }
            step *= 0.5;
            if step < opts.min_step {
                return Err(SolverError::LineSearchStall {
                    iteration: report.iterations + 1,
                    min_step: opts.min_step,
                    residual: r_sup,
                });
            }
        }
        report.iterations += 1;
        report.step_lengths.push(step);
        report.residual_history.push(r_sup);
        debug!("iter {} resid {r_sup:e} lin_iters {}", report.iterations, lin.iterations);
    }
    report.converged = true;
    Ok((u, report))
}

/// Dense Gaussian elimination with partial pivoting, for small oracle systems.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col] == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}
