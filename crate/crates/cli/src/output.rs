//! CSV tables and gnuplot data files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use tgfem::assembly::FemFunction;
use tgfem::study::{ConvergenceStudy, TwoGridStudy};

#[derive(Serialize)]
struct ConvergeCsvRow {
    level: usize,
    h: f64,
    n_dof: usize,
    err_energy: f64,
    err_l2: f64,
    err_l4: f64,
    eoc_energy: Option<f64>,
    eoc_l2: Option<f64>,
    eoc_l4: Option<f64>,
    newton_iters: usize,
    wall_ms: f64,
}

#[derive(Serialize)]
struct TwoGridCsvRow {
    h: f64,
    #[serde(rename = "H")]
    coarse_h: f64,
    err_energy_direct: f64,
    err_energy_twogrid: f64,
    ratio: f64,
    coarse_newton_iters: usize,
    fine_linear_iters: usize,
    wall_ms_direct: f64,
    wall_ms_twogrid: f64,
}

#[derive(Serialize)]
struct SolutionCsvRow {
    vertex: usize,
    x: f64,
    y: f64,
    u: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn converge_csv(path: &Path, study: &ConvergenceStudy) -> Result<(), csv::Error> {
    write_csv(
        path,
        study.rows.iter().map(|r| ConvergeCsvRow {
            level: r.level,
            h: r.h,
            n_dof: r.record.n_dof,
            err_energy: r.record.err_energy,
            err_l2: r.record.err_l2,
            err_l4: r.record.err_l4,
            eoc_energy: r.eoc_energy,
            eoc_l2: r.eoc_l2,
            eoc_l4: r.eoc_l4,
            newton_iters: r.newton_iters,
            wall_ms: r.wall_ms,
        }),
    )
}

pub fn twogrid_csv(path: &Path, study: &TwoGridStudy) -> Result<(), csv::Error> {
    write_csv(
        path,
        study.rows.iter().map(|r| TwoGridCsvRow {
            h: r.h,
            coarse_h: r.coarse_h,
            err_energy_direct: r.err_energy_direct,
            err_energy_twogrid: r.err_energy_twogrid,
            ratio: r.ratio,
            coarse_newton_iters: r.coarse_newton_iters,
            fine_linear_iters: r.fine_linear_iters,
            wall_ms_direct: r.wall_ms_direct,
            wall_ms_twogrid: r.wall_ms_twogrid,
        }),
    )
}

pub fn solution_csv(path: &Path, u: &FemFunction) -> Result<(), csv::Error> {
    let vertices = u.mesh().vertices();
    write_csv(
        path,
        u.coefficients().iter().enumerate().map(|(i, &value)| SolutionCsvRow { vertex: i, x: vertices[i][0], y: vertices[i][1], u: value }),
    )
}

fn write_dat(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> std::io::Result<()> {
    let mut out = Vec::new();
    writeln!(out, "# {header}")?;
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(out, "{}", fields.join(" "))?;
    }
    fs::write(path, out)
}

/// Columns `h err_energy err_l2 err_l4`, for log-log plots.
pub fn converge_dat(path: &Path, study: &ConvergenceStudy) -> std::io::Result<()> {
    write_dat(
        path,
        "h err_energy err_l2 err_l4",
        study.rows.iter().map(|r| vec![r.h, r.record.err_energy, r.record.err_l2, r.record.err_l4]),
    )
}

/// Columns `h H err_energy_direct err_energy_twogrid`.
pub fn twogrid_dat(path: &Path, study: &TwoGridStudy) -> std::io::Result<()> {
    write_dat(
        path,
        "h H err_energy_direct err_energy_twogrid",
        study.rows.iter().map(|r| vec![r.h, r.coarse_h, r.err_energy_direct, r.err_energy_twogrid]),
    )
}
