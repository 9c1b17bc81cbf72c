//! Norms, error measurement, convergence orders and the inequality checks
//! behind the two-grid estimates.

use serde::Serialize;
use thiserror::Error;

use crate::assembly::{barycentric_gradients, map_point, FemFunction};
use crate::mesh::Mesh;
use crate::problems::{Barriers, Diffusion, ManufacturedSolution, Site};
use crate::quadrature::QuadratureRule;
use crate::twogrid::{prolongate, TwoGridError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("reference solution is not on a refinement of the approximation's mesh")]
    NotNested,
    #[error("error is zero at record {0}; convergence order undefined")]
    ZeroError(usize),
    #[error("need at least two records with strictly decreasing h")]
    InvalidRecords,
    #[error("function does not vanish on the boundary (vertex {0})")]
    BoundaryNotZero(usize),
    #[error("denominator {0:e} is below 1e-14")]
    DegenerateDenominator(f64),
    #[error("unsupported exponent p = {0}")]
    UnsupportedExponent(u32),
}

impl From<TwoGridError> for AnalysisError {
    fn from(_: TwoGridError) -> Self {
        AnalysisError::NotNested
    }
}

/// `|||v||| = sqrt(a(v, v))`, summed elementwise from the constant P1 gradients.
pub fn energy_norm(v: &FemFunction, diffusion: &Diffusion) -> f64 {
    let mesh = v.mesh();
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let g = v.gradient(t);
            diffusion.get(tri.region) * mesh.area(t) * (g[0] * g[0] + g[1] * g[1])
        })
        .sum::<f64>()
        .sqrt()
}

/// `||grad v||_{0,2}`.
pub fn gradient_norm(v: &FemFunction) -> f64 {
    energy_norm(v, &Diffusion::uniform(1.0))
}

fn check_exponent(p: u32) -> Result<(), AnalysisError> {
    if p == 2 || p == 4 {
        Ok(())
    } else {
        Err(AnalysisError::UnsupportedExponent(p))
    }
}

/// `||v||_{0,p}` of a P1 function; exact when the rule has degree `>= p`.
pub fn lp_norm(v: &FemFunction, p: u32, quad: &QuadratureRule) -> Result<f64, AnalysisError> {
    check_exponent(p)?;
    let mesh = v.mesh();
    let integral: f64 = (0..mesh.n_triangles())
        .map(|t| {
            let area = mesh.area(t);
            quad.iter().map(|(lambda, w)| w * area * v.eval_local(t, lambda).abs().powi(p as i32)).sum::<f64>()
        })
        .sum();
    Ok(integral.powf(1.0 / p as f64))
}

/// `||f||_{0,p}` of a field over the mesh's domain by quadrature.
pub fn lp_norm_field(mesh: &Mesh, f: impl Fn(Site) -> f64, p: u32, quad: &QuadratureRule) -> Result<f64, AnalysisError> {
    check_exponent(p)?;
    let integral: f64 = mesh
        .triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let corners = mesh.corners(t);
            let area = mesh.area(t);
            quad.iter()
                .map(|(lambda, w)| {
                    let site = Site { point: map_point(&corners, lambda), region: tri.region };
                    w * area * f(site).abs().powi(p as i32)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(integral.powf(1.0 / p as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub h: f64,
    pub n_dof: usize,
    pub err_energy: f64,
    pub err_l2: f64,
    pub err_l4: f64,
    pub err_linf_nodal: f64,
}

/// What an approximation is compared against.
#[derive(Clone, Copy)]
pub enum Reference<'a> {
    Exact(&'a ManufacturedSolution),
    /// Discrete solution on the same mesh or a nested refinement of it.
    Discrete(&'a FemFunction),
}

fn free_vertices(mesh: &Mesh) -> usize {
    mesh.boundary_flags().iter().filter(|&&b| !b).count()
}

/// Errors `u - u_h` in the energy, `L^2`, `L^4` and nodal sup norms.
///
/// Against a closed-form solution the integrals use the exact gradient on each
/// region; against a discrete reference `u_h` is first prolongated to the
/// reference mesh so the difference is an exact P1 function.
pub fn error_norms(
    u_h: &FemFunction,
    diffusion: &Diffusion,
    reference: Reference<'_>,
    quad: &QuadratureRule,
) -> Result<ErrorRecord, AnalysisError> {
    let mesh = u_h.mesh();
    let (h, n_dof) = (mesh.h(), free_vertices(mesh));
    match reference {
        Reference::Exact(exact) => {
            let (mut energy, mut l2, mut l4, mut linf) = (0.0, 0.0, 0.0, 0.0f64);
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let corners = mesh.corners(t);
                let area = mesh.area(t);
                let d = diffusion.get(tri.region);
                let grad_h = u_h.gradient(t);
                for (lambda, w) in quad.iter() {
                    let site = Site { point: map_point(&corners, lambda), region: tri.region };
                    let g = (exact.exact_grad)(site);
                    let (gx, gy) = (g[0] - grad_h[0], g[1] - grad_h[1]);
                    let e = (exact.exact)(site) - u_h.eval_local(t, lambda);
                    energy += w * area * d * (gx * gx + gy * gy);
                    l2 += w * area * e * e;
                    l4 += w * area * e.powi(4);
                }
                for (k, &v) in tri.vertices.iter().enumerate() {
                    let site = Site { point: corners[k], region: tri.region };
                    linf = linf.max(((exact.exact)(site) - u_h.coefficients()[v]).abs());
                }
            }
            Ok(ErrorRecord { h, n_dof, err_energy: energy.sqrt(), err_l2: l2.sqrt(), err_l4: l4.powf(0.25), err_linf_nodal: linf })
        }
        Reference::Discrete(reference) => {
            let lifted = prolongate(u_h, reference.mesh())?;
            let diff = reference.sub(&lifted);
            Ok(ErrorRecord {
                h,
                n_dof,
                err_energy: energy_norm(&diff, diffusion),
                err_l2: lp_norm(&diff, 2, quad)?,
                err_l4: lp_norm(&diff, 4, quad)?,
                err_linf_nodal: diff.sup_norm(),
            })
        }
    }
}

/// Orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` between consecutive levels.
pub fn estimate_eoc(h: &[f64], errors: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if h.len() != errors.len() || h.len() < 2 || h.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(AnalysisError::InvalidRecords);
    }
    if let Some(i) = errors.iter().position(|&e| e == 0.0) {
        return Err(AnalysisError::ZeroError(i));
    }
    Ok(h.windows(2).zip(errors.windows(2)).map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Ordered by decreasing `h`.
    pub records: Vec<ErrorRecord>,
    pub eoc_energy: Vec<f64>,
    pub eoc_l2: Vec<f64>,
    pub eoc_l4: Vec<f64>,
}

impl ConvergenceReport {
    /// A single record gives empty order lists.
    pub fn new(records: Vec<ErrorRecord>) -> Result<Self, AnalysisError> {
        if records.is_empty() {
            return Err(AnalysisError::InvalidRecords);
        }
        if records.len() == 1 {
            return Ok(ConvergenceReport { records, eoc_energy: vec![], eoc_l2: vec![], eoc_l4: vec![] });
        }
        let h: Vec<f64> = records.iter().map(|r| r.h).collect();
        let series = |f: fn(&ErrorRecord) -> f64| -> Result<Vec<f64>, AnalysisError> {
            estimate_eoc(&h, &records.iter().map(f).collect::<Vec<_>>())
        };
        Ok(ConvergenceReport {
            eoc_energy: series(|r| r.err_energy)?,
            eoc_l2: series(|r| r.err_l2)?,
            eoc_l4: series(|r| r.err_l4)?,
            records,
        })
    }
}

pub const LINF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinfReport {
    pub min: f64,
    pub max: f64,
    pub barriers: Barriers,
    pub tolerance: f64,
    pub violating_vertices: Vec<usize>,
    pub passes: bool,
}

/// Checks `lower - tol <= u_h <= upper + tol` at every vertex.
pub fn linf_check(u_h: &FemFunction, barriers: Barriers) -> LinfReport {
    let c = u_h.coefficients();
    let violating_vertices: Vec<usize> = (0..c.len())
        .filter(|&i| c[i] < barriers.lower - LINF_TOL || c[i] > barriers.upper + LINF_TOL)
        .collect();
    LinfReport {
        min: c.iter().copied().fold(f64::INFINITY, f64::min),
        max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        barriers,
        tolerance: LINF_TOL,
        passes: violating_vertices.is_empty(),
        violating_vertices,
    }
}

/// Constant of the three-dimensional `L^4` interpolation bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Ladyzhenskaya3d {
    /// `sqrt(2)`.
    Classical,
    /// `(4/3)^(3/8)`.
    Sharpened,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadyzhenskayaTerms {
    pub l2: f64,
    pub grad: f64,
    pub l4: f64,
    /// `C ||v||_2^a ||grad v||_2^b`.
    pub bound: f64,
    /// `bound - l4`, nonnegative for every `v` in `H^1_0`.
    pub margin: f64,
}

/// `2^(1/4) ||v||_2^(1/2) ||grad v||_2^(1/2) - ||v||_4` for a P1 function vanishing on the boundary.
pub fn ladyzhenskaya_margin(v: &FemFunction) -> Result<LadyzhenskayaTerms, AnalysisError> {
    let mesh = v.mesh();
    if let Some(i) = mesh.boundary_vertices().into_iter().find(|&i| v.coefficients()[i] != 0.0) {
        return Err(AnalysisError::BoundaryNotZero(i));
    }
    // |v|^4 of a P1 function has degree 4
    let quad = QuadratureRule::seven_point();
    let (l2, grad, l4) = (lp_norm(v, 2, &quad)?, gradient_norm(v), lp_norm(v, 4, &quad)?);
    let bound = 2f64.powf(0.25) * l2.sqrt() * grad.sqrt();
    Ok(LadyzhenskayaTerms { l2, grad, l4, bound, margin: bound - l4 })
}

/// Three-dimensional bound `C ||v||_2^(1/4) ||grad v||_2^(3/4)` minus `||v||_4`
/// evaluated on caller-supplied norms.
pub fn ladyzhenskaya_margin_3d(l2: f64, grad: f64, l4: f64, constant: Ladyzhenskaya3d) -> LadyzhenskayaTerms {
    let c = match constant {
        Ladyzhenskaya3d::Classical => 2f64.sqrt(),
        Ladyzhenskaya3d::Sharpened => (4.0f64 / 3.0).powf(3.0 / 8.0),
    };
    let bound = c * l2.powf(0.25) * grad.powf(0.75);
    LadyzhenskayaTerms { l2, grad, l4, bound, margin: bound - l4 }
}

/// `|||u_h - u^h||| / ||u_h - u_H||_4^2`, all three functions on the fine mesh.
pub fn twogrid_bound_ratio(
    u_h: &FemFunction,
    u_coarse_prolonged: &FemFunction,
    u_two_grid: &FemFunction,
    diffusion: &Diffusion,
) -> Result<f64, AnalysisError> {
    let quad = QuadratureRule::seven_point();
    let denom = lp_norm(&u_h.sub(u_coarse_prolonged), 4, &quad)?;
    if denom < 1e-14 {
        return Err(AnalysisError::DegenerateDenominator(denom));
    }
    Ok(energy_norm(&u_h.sub(u_two_grid), diffusion) / (denom * denom))
}

/// Per-element gradient oracle used by tests: `||grad v||^2 = sum area |grad v|_T^2`
/// computed from raw barycentric gradients, independent of the stiffness matrix.
pub fn element_gradient_norm_sq(mesh: &Mesh, coefficients: &[f64]) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| {
            let (area, g) = barycentric_gradients(mesh.corners(t));
            let v = mesh.triangles()[t].vertices;
            let gx: f64 = (0..3).map(|k| coefficients[v[k]] * g[k][0]).sum();
            let gy: f64 = (0..3).map(|k| coefficients[v[k]] * g[k][1]).sum();
            area * (gx * gx + gy * gy)
        })
        .sum()
}
