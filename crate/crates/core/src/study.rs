//! Multi-level experiments: convergence studies and two-grid comparisons.
//!
//! Levels are labelled by the grid spacing `h = width / n` of the structured
//! mesh; the triangle diameters are `sqrt(2) h`.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{error_norms, twogrid_bound_ratio, AnalysisError, ConvergenceReport, ErrorRecord, Reference};
use crate::assembly::FemFunction;
use crate::mesh::{hierarchy, refine_uniform, Mesh, MeshError};
use crate::problems::{ManufacturedSolution, Problem};
use crate::solvers::{newton_solve, NewtonOptions, SolveReport, SolverError};
use crate::twogrid::{prolongate, select_coarse_size, two_grid_solve, Snap, TwoGridError, TwoGridOptions, TwoGridResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("level {level}: {source}")]
    Solver { level: usize, source: SolverError },
    #[error("level {level}: {source}")]
    TwoGrid { level: usize, source: TwoGridError },
    #[error("reference solve failed: {0}")]
    Reference(SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("invalid study: {0}")]
    Invalid(String),
}

fn elapsed_ms(start: Instant, timing: bool) -> f64 {
    if timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

fn spacing(mesh_n: usize, problem: &Problem) -> f64 {
    problem.geometry.spacing(mesh_n)
}

/// Newton solve started from the prolongation of `previous` (or zero).
fn nested_solve(
    mesh: &Arc<Mesh>,
    problem: &Problem,
    previous: Option<&FemFunction>,
    opts: &NewtonOptions,
) -> Result<(FemFunction, SolveReport), SolverError> {
    let initial = match previous {
        Some(u) => prolongate(u, mesh).expect("study meshes are nested"),
        None => FemFunction::zeros(Arc::clone(mesh)),
    };
    newton_solve(mesh, problem, initial, opts)
}

/// Discrete reference on `levels` uniform refinements of the finest mesh.
fn reference_solution(
    finest: &Arc<Mesh>,
    finest_solution: &FemFunction,
    problem: &Problem,
    levels: usize,
    opts: &NewtonOptions,
) -> Result<FemFunction, StudyError> {
    let mut mesh = Arc::clone(finest);
    let mut u = finest_solution.clone();
    for _ in 0..levels {
        mesh = Arc::new(refine_uniform(&mesh));
        u = nested_solve(&mesh, problem, Some(&u), opts).map_err(StudyError::Reference)?.0;
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSettings {
    /// Subdivisions of the coarsest mesh per direction.
    pub coarsest_n: usize,
    pub levels: usize,
    pub newton: NewtonOptions,
    /// Extra refinements for the discrete reference when no closed form is given.
    pub reference_levels: usize,
    /// When false all wall times are reported as zero.
    pub timing: bool,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings { coarsest_n: 16, levels: 5, newton: NewtonOptions::default(), reference_levels: 2, timing: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub n: usize,
    pub record: ErrorRecord,
    pub eoc_energy: Option<f64>,
    pub eoc_l2: Option<f64>,
    pub eoc_l4: Option<f64>,
    pub newton_iters: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub report: ConvergenceReport,
}

/// Full Newton solves on a nested hierarchy, each started from the previous
/// level's solution, measured against `exact` or a refined reference.
pub fn convergence_study(
    problem: &Problem,
    exact: Option<&ManufacturedSolution>,
    settings: &ConvergenceSettings,
) -> Result<ConvergenceStudy, StudyError> {
    if settings.levels == 0 {
        return Err(StudyError::Invalid("at least one level is required".into()));
    }
    let meshes = hierarchy(settings.coarsest_n, &problem.geometry, settings.levels)?;
    let mut solutions: Vec<FemFunction> = Vec::with_capacity(meshes.len());
    let mut stats = Vec::with_capacity(meshes.len());
    for (level, mesh) in meshes.iter().enumerate() {
        let start = Instant::now();
        let (u, report) = nested_solve(mesh, problem, solutions.last(), &settings.newton)
            .map_err(|source| StudyError::Solver { level, source })?;
        stats.push((report.iterations, elapsed_ms(start, settings.timing)));
        solutions.push(u);
    }

    let quad = &settings.newton.quadrature;
    let discrete;
    let reference = match exact {
        Some(m) => Reference::Exact(m),
        None => {
            discrete = reference_solution(
                meshes.last().unwrap(),
                solutions.last().unwrap(),
                problem,
                settings.reference_levels,
                &settings.newton,
            )?;
            Reference::Discrete(&discrete)
        }
    };
    let mut records = Vec::with_capacity(solutions.len());
    for (level, u) in solutions.iter().enumerate() {
        let mut record = error_norms(u, &problem.diffusion, reference, quad)?;
        record.h = spacing(settings.coarsest_n << level, problem);
        records.push(record);
    }
    let report = ConvergenceReport::new(records)?;
    let rows = report
        .records
        .iter()
        .enumerate()
        .map(|(level, record)| {
            let eoc = |v: &Vec<f64>| level.checked_sub(1).map(|i| v[i]);
            ConvergenceRow {
                level,
                h: record.h,
                n: settings.coarsest_n << level,
                record: *record,
                eoc_energy: eoc(&report.eoc_energy),
                eoc_l2: eoc(&report.eoc_l2),
                eoc_l4: eoc(&report.eoc_l4),
                newton_iters: stats[level].0,
                wall_ms: stats[level].1,
            }
        })
        .collect();
    Ok(ConvergenceStudy { rows, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoGridSettings {
    /// Subdivisions of the coarsest admissible mesh; every coarse grid is a refinement of it.
    pub coarsest_n: usize,
    /// Fine levels, as refinement counts above the coarsest mesh.
    pub fine_levels: Vec<usize>,
    pub s: f64,
    pub tau: f64,
    pub snap: Snap,
    pub options: TwoGridOptions,
    /// Options of the direct fine and reference solves.
    pub newton: NewtonOptions,
    pub reference_levels: usize,
    pub timing: bool,
}

impl Default for TwoGridSettings {
    fn default() -> Self {
        TwoGridSettings {
            coarsest_n: 4,
            fine_levels: vec![3, 4, 5],
            s: 2.0,
            tau: 2.0,
            snap: Snap::Up,
            options: TwoGridOptions::default(),
            newton: NewtonOptions::default(),
            reference_levels: 2,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoGridRow {
    pub h: f64,
    pub coarse_h: f64,
    pub err_energy_direct: f64,
    pub err_energy_twogrid: f64,
    /// Two-grid error over direct error.
    pub ratio: f64,
    /// Error of the prolongated coarse solution.
    pub err_energy_coarse: f64,
    /// `|||u_h - u^h||| / ||u_h - u_H||_4^2`, `None` when the denominator vanishes.
    pub bound_ratio: Option<f64>,
    pub coarse_newton_iters: usize,
    pub fine_linear_iters: usize,
    pub wall_ms_direct: f64,
    pub wall_ms_twogrid: f64,
}

/// Two-grid and direct solutions on one nested pair.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub two_grid: TwoGridResult,
    pub direct: FemFunction,
    pub direct_report: SolveReport,
    pub wall_ms_direct: f64,
    pub wall_ms_twogrid: f64,
}

/// Runs the two-grid algorithm and a direct Newton solve (started from the
/// prolongated coarse solution) on a nested pair; `level` labels errors.
pub fn compare_pair(
    level: usize,
    coarse: &Arc<Mesh>,
    fine: &Arc<Mesh>,
    problem: &Problem,
    options: &TwoGridOptions,
    newton: &NewtonOptions,
    timing: bool,
) -> Result<PairOutcome, StudyError> {
    let start = Instant::now();
    let two_grid = two_grid_solve(coarse, fine, problem, options).map_err(|source| StudyError::TwoGrid { level, source })?;
    let wall_ms_twogrid = elapsed_ms(start, timing);
    let start = Instant::now();
    let (direct, direct_report) = newton_solve(fine, problem, two_grid.prolonged_coarse.clone(), newton)
        .map_err(|source| StudyError::Solver { level, source })?;
    let wall_ms_direct = elapsed_ms(start, timing);
    Ok(PairOutcome { two_grid, direct, direct_report, wall_ms_direct, wall_ms_twogrid })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoGridStudy {
    pub rows: Vec<TwoGridRow>,
}

/// For each fine level picks `H` by the rate-balancing rule, runs
/// [`compare_pair`] and measures energy errors against a reference solved
/// `reference_levels` refinements below the finest fine level.
pub fn twogrid_study(problem: &Problem, settings: &TwoGridSettings) -> Result<TwoGridStudy, StudyError> {
    let finest = *settings
        .fine_levels
        .iter()
        .max()
        .ok_or_else(|| StudyError::Invalid("no fine levels given".into()))?;
    if settings.fine_levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StudyError::Invalid("fine levels must be strictly increasing".into()));
    }
    let meshes = hierarchy(settings.coarsest_n, &problem.geometry, finest + 1)?;

    let mut outcomes = Vec::with_capacity(settings.fine_levels.len());
    for &level in &settings.fine_levels {
        let h = spacing(settings.coarsest_n << level, problem);
        let size = select_coarse_size(h, settings.s, settings.tau, 2, settings.snap, level as u32)
            .map_err(|source| StudyError::TwoGrid { level, source })?;
        let coarse_level = level - size.levels_up as usize;
        let outcome = compare_pair(
            level,
            &meshes[coarse_level],
            &meshes[level],
            problem,
            &settings.options,
            &settings.newton,
            settings.timing,
        )?;
        outcomes.push((level, h, size.snapped, outcome));
    }

    let (_, _, _, last) = outcomes.last().unwrap();
    let reference = reference_solution(&meshes[finest], &last.direct, problem, settings.reference_levels, &settings.newton)?;
    let quad = &settings.newton.quadrature;
    let energy = |u: &FemFunction| -> Result<f64, StudyError> {
        Ok(error_norms(u, &problem.diffusion, Reference::Discrete(&reference), quad)?.err_energy)
    };
    let mut rows = Vec::with_capacity(outcomes.len());
    for (_, h, coarse_h, o) in &outcomes {
        let err_energy_direct = energy(&o.direct)?;
        let err_energy_twogrid = energy(&o.two_grid.fine_solution)?;
        let bound_ratio =
            twogrid_bound_ratio(&o.direct, &o.two_grid.prolonged_coarse, &o.two_grid.fine_solution, &problem.diffusion).ok();
        rows.push(TwoGridRow {
            h: *h,
            coarse_h: *coarse_h,
            err_energy_direct,
            err_energy_twogrid,
            ratio: err_energy_twogrid / err_energy_direct,
            err_energy_coarse: energy(&o.two_grid.prolonged_coarse)?,
            bound_ratio,
            coarse_newton_iters: o.two_grid.coarse_report.iterations,
            fine_linear_iters: o.two_grid.fine_report.iterations,
            wall_ms_direct: o.wall_ms_direct,
            wall_ms_twogrid: o.wall_ms_twogrid,
        });
    }
    Ok(TwoGridStudy { rows })
}
