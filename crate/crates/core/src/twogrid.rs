//! Two-grid solver: an exact nonlinear solve on a coarse mesh followed by a
//! single Newton-linearised solve on a nested fine mesh.

use std::sync::Arc;

use log::warn;
use serde::Serialize;
use thiserror::Error;

use crate::assembly::{
    apply_dirichlet, assemble_reaction_jacobian, assemble_state_load, AssemblyError, DiscreteSystem, FemFunction,
};
use crate::mesh::{Mesh, VertexOrigin};
use crate::problems::Problem;
use crate::solvers::{newton_solve, pcg_solve, LinearReport, NewtonOptions, PcgOptions, SolveReport, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwoGridError {
    #[error("fine mesh is not a uniform refinement of the coarse mesh")]
    NotNested,
    #[error("invalid regularity: {0}")]
    InvalidRegularity(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Exact embedding of a coarse P1 function into a nested fine space.
pub fn prolongate(coarse: &FemFunction, fine_mesh: &Arc<Mesh>) -> Result<FemFunction, TwoGridError> {
    let depth = fine_mesh.depth_below(coarse.mesh()).ok_or(TwoGridError::NotNested)?;
    // Meshes from the coarse one (exclusive) down to the fine one.
    let mut chain: Vec<&Arc<Mesh>> = Vec::with_capacity(depth);
    let mut current = fine_mesh;
    for _ in 0..depth {
        chain.push(current);
        current = current.parent().expect("depth_below walked this chain");
    }
    let mut values = coarse.coefficients().to_vec();
    for mesh in chain.into_iter().rev() {
        let origins = &mesh.genealogy().expect("refined mesh").origins;
        values = origins
            .iter()
            .map(|o| match *o {
                VertexOrigin::Coarse(v) => values[v],
                VertexOrigin::Midpoint(a, b) => 0.5 * (values[a] + values[b]),
            })
            .collect();
    }
    Ok(FemFunction::new(Arc::clone(fine_mesh), values)?)
}

/// Solves `<F'(u_base) w, v> = <F'(u_base) u_base, v> - <F(u_base), v>` for `w`,
/// i.e. `(A + M_{b'(u_base)}) w = load + (b'(u_base) u_base - b(u_base), phi)`.
pub fn linearized_solve(
    mesh: &Arc<Mesh>,
    problem: &Problem,
    u_base: &FemFunction,
    newton: &NewtonOptions,
    linear: &PcgOptions,
) -> Result<(FemFunction, LinearReport), TwoGridError> {
    assert!(Arc::ptr_eq(u_base.mesh(), mesh), "base state lives on another mesh");
    let quad = &newton.quadrature;
    let b = problem.nonlinearity.as_ref();
    let system = DiscreteSystem::new(mesh, problem, quad)?;

    let negative = mesh
        .triangles()
        .iter()
        .flat_map(|t| t.vertices.iter().map(move |&v| (v, t.region)))
        .filter(|&(v, region)| b.d1(crate::problems::Site { point: mesh.vertices()[v], region }, u_base.coefficients()[v]) < 0.0)
        .count();
    if negative > 0 {
        warn!("b'(u_base) is negative at {negative} vertex/region pairs; the linearised system may be indefinite");
    }

    let reaction = assemble_reaction_jacobian(mesh, u_base, |s, v| b.d1(s, v), quad);
    let m_base = reaction.mul_vec(u_base.coefficients());
    let b_base = assemble_state_load(mesh, u_base, |s, v| b.eval(s, v), quad);
    let rhs: Vec<f64> = system.load.iter().zip(m_base).zip(b_base).map(|((l, m), bv)| l + m - bv).collect();
    let matrix = system.stiffness.add(&reaction);
    let (matrix, rhs) = apply_dirichlet(matrix, rhs, &system.constraints);
    let (x, report) = pcg_solve(&matrix, &rhs, Some(u_base.coefficients()), linear)?;
    Ok((FemFunction::new(Arc::clone(mesh), x)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoGridOptions {
    /// Coarse "exact" solve.
    pub coarse: NewtonOptions,
    /// Fine linearised solve.
    pub linear: PcgOptions,
}

impl Default for TwoGridOptions {
    fn default() -> Self {
        TwoGridOptions {
            coarse: NewtonOptions { abs_tol: 1e-12, ..NewtonOptions::default() },
            linear: PcgOptions { rtol: 1e-12, ..PcgOptions::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoGridResult {
    /// `u_H` on the coarse mesh.
    pub coarse_solution: FemFunction,
    /// `u_H` embedded in the fine space.
    pub prolonged_coarse: FemFunction,
    /// `u^h`.
    pub fine_solution: FemFunction,
    pub coarse_report: SolveReport,
    pub fine_report: LinearReport,
    pub coarse_h: f64,
    pub fine_h: f64,
}

pub fn two_grid_solve(
    coarse_mesh: &Arc<Mesh>,
    fine_mesh: &Arc<Mesh>,
    problem: &Problem,
    opts: &TwoGridOptions,
) -> Result<TwoGridResult, TwoGridError> {
    if fine_mesh.depth_below(coarse_mesh).is_none() {
        return Err(TwoGridError::NotNested);
    }
    let (coarse_solution, coarse_report) =
        newton_solve(coarse_mesh, problem, FemFunction::zeros(Arc::clone(coarse_mesh)), &opts.coarse)?;
    let prolonged_coarse = prolongate(&coarse_solution, fine_mesh)?;
    let (fine_solution, fine_report) = linearized_solve(fine_mesh, problem, &prolonged_coarse, &opts.coarse, &opts.linear)?;
    Ok(TwoGridResult {
        coarse_solution,
        prolonged_coarse,
        fine_solution,
        coarse_report,
        fine_report,
        coarse_h: coarse_mesh.h(),
        fine_h: fine_mesh.h(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Snap {
    /// Largest available level not exceeding the formula value.
    Up,
    /// Available level closest to the formula value on a log scale.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoarseSize {
    /// `log H / log h` from the rate balance.
    pub exponent: f64,
    /// `h^exponent`.
    pub formula: f64,
    /// Chosen `H = h * 2^levels_up`.
    pub snapped: f64,
    pub levels_up: u32,
}

/// Coarse mesh size balancing the two-grid error terms:
/// `H = h^((s-1)/(t + 2(s-1)))` in 2D and `H = h^((s-1)/(t/2 + 2(s-1)))` in 3D,
/// with `t = min(s, tau) - 1`, snapped to a level `h * 2^k` with `k <= max_levels_up`.
pub fn select_coarse_size(
    h: f64,
    s: f64,
    tau: f64,
    dim: u32,
    snap: Snap,
    max_levels_up: u32,
) -> Result<CoarseSize, TwoGridError> {
    if !(s > 1.0 && tau > 1.0) {
        return Err(TwoGridError::InvalidRegularity(format!("need s > 1 and tau > 1, got s = {s}, tau = {tau}")));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(TwoGridError::InvalidRegularity(format!("fine mesh size must lie in (0, 1), got {h}")));
    }
    let t = s.min(tau) - 1.0;
    let exponent = match dim {
        2 => (s - 1.0) / (t + 2.0 * (s - 1.0)),
        3 => (s - 1.0) / (t / 2.0 + 2.0 * (s - 1.0)),
        _ => return Err(TwoGridError::InvalidRegularity(format!("dimension must be 2 or 3, got {dim}"))),
    };
    let formula = h.powf(exponent);
    let ratio = (formula / h).log2();
    let levels_up = match snap {
        Snap::Up => (ratio + 1e-9).floor(),
        Snap::Nearest => ratio.round(),
    }
    .clamp(0.0, max_levels_up as f64) as u32;
    Ok(CoarseSize { exponent, formula, snapped: h * 2f64.powi(levels_up as i32), levels_up })
}
