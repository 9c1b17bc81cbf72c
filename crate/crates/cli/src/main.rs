use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use thiserror::Error;

use tgfem::assembly::FemFunction;
use tgfem::mesh::{check_angle_condition, hierarchy, save_mesh, AngleReport, MeshError};
use tgfem::problems::compute_barriers;
use tgfem::solvers::{newton_solve, NewtonOptions, SolveReport, SolverError};
use tgfem::study::{convergence_study, twogrid_study, ConvergenceSettings, StudyError, TwoGridSettings};
use tgfem::twogrid::TwoGridOptions;

mod config;
mod output;

use config::{ConfigError, StudyConfig};

#[derive(Parser)]
#[command(name = "tgfem", version, about = "P1 finite elements and two-grid Newton for semilinear interface problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the angle condition on every level of the mesh hierarchy.
    CheckMesh(CommonArgs),
    /// Newton solves on nested levels with error norms and observed orders.
    Converge(CommonArgs),
    /// Two-grid versus direct fine solves with H picked by the rate-balancing rule.
    Twogrid(CommonArgs),
    /// One Newton solve on the finest configured level.
    Solve(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Study configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print machine-readable JSON on stdout.
    #[arg(long)]
    json: bool,
    /// Number of levels (for twogrid: fine levels 1..=K above the coarsest admissible mesh).
    #[arg(long)]
    levels: Option<usize>,
    /// Volume quadrature degree, 1 to 10.
    #[arg(long)]
    quad_degree: Option<u32>,
    /// Rounding of the coarse mesh size to an available level.
    #[arg(long, value_parser = ["up", "nearest"])]
    snap: Option<String>,
    /// Report all wall times as zero, making output byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Accepted for reproducibility records; the studies use no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write output: {0}")]
    Csv(#[from] csv::Error),
    #[error("angle condition fails on {0} level(s)")]
    AngleCondition(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::ReadConfig { .. } | CliError::Config(_) | CliError::Mesh(_) => 2,
            CliError::Study(StudyError::Mesh(_) | StudyError::Invalid(_)) => 2,
            _ => 1,
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<StudyConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::ReadConfig { path: path.clone(), source })?;
            StudyConfig::parse(&text)?
        }
        None => StudyConfig::default(),
    };
    if let Some(out) = &args.out {
        config.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(k) = args.levels {
        config.levels = k;
        config.fine_levels = (1..=k).collect();
    }
    if let Some(d) = args.quad_degree {
        config.newton.quadrature = config::quadrature(d).map_err(|message| ConfigError::Value {
            section: "flags".into(),
            key: "quad-degree".into(),
            message,
        })?;
    }
    if let Some(s) = &args.snap {
        config.snap = config::snap_from_flag(s)?;
    }
    if args.no_timing {
        config.timing = false;
    }
    if let Some(seed) = args.seed {
        info!("seed {seed} ignored: studies are deterministic");
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(config: &StudyConfig) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&config.out_dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

#[derive(Serialize)]
struct LevelAudit {
    level: usize,
    n: usize,
    h: f64,
    vertices: usize,
    triangles: usize,
    report: AngleReport,
}

fn check_mesh(args: &CommonArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let (problem, _) = config.build_problem()?;
    let meshes = hierarchy(config.coarsest_n, &problem.geometry, config.levels)?;
    let audits: Vec<LevelAudit> = meshes
        .iter()
        .enumerate()
        .map(|(level, mesh)| LevelAudit {
            level,
            n: config.coarsest_n << level,
            h: problem.geometry.spacing(config.coarsest_n << level),
            vertices: mesh.n_vertices(),
            triangles: mesh.n_triangles(),
            report: check_angle_condition(mesh, &problem.diffusion),
        })
        .collect();
    if args.json {
        print_json(&audits);
    } else {
        println!("{:>5} {:>6} {:>12} {:>9} {:>9} {:>14}  result", "level", "n", "h", "vertices", "triangles", "worst_offdiag");
        for a in &audits {
            println!(
                "{:>5} {:>6} {:>12.6e} {:>9} {:>9} {:>14.6e}  {}",
                a.level,
                a.n,
                a.h,
                a.vertices,
                a.triangles,
                a.report.worst_offdiag,
                if a.report.passes { "pass" } else { "FAIL" }
            );
        }
    }
    match audits.iter().filter(|a| !a.report.passes).count() {
        0 => Ok(()),
        failed => Err(CliError::AngleCondition(failed)),
    }
}

fn converge(args: &CommonArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let (problem, exact) = config.build_problem()?;
    let settings = ConvergenceSettings {
        coarsest_n: config.coarsest_n,
        levels: config.levels,
        newton: config.newton.clone(),
        reference_levels: config.reference_levels,
        timing: config.timing,
    };
    let study = convergence_study(&problem, exact.as_ref(), &settings)?;
    let dir = out_dir(&config)?;
    output::converge_csv(&dir.join("converge.csv"), &study)?;
    output::converge_dat(&dir.join("converge.dat"), &study)?;
    if args.json {
        print_json(&study);
    } else {
        println!("{:>5} {:>12} {:>14} {:>14} {:>14} {:>8} {:>8} {:>8}", "level", "h", "err_energy", "err_l2", "err_l4", "eoc_H1", "eoc_L2", "eoc_L4");
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        for r in &study.rows {
            println!(
                "{:>5} {:>12.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>8} {:>8} {:>8}",
                r.level,
                r.h,
                r.record.err_energy,
                r.record.err_l2,
                r.record.err_l4,
                fmt(r.eoc_energy),
                fmt(r.eoc_l2),
                fmt(r.eoc_l4)
            );
        }
    }
    info!("wrote {}", dir.join("converge.csv").display());
    Ok(())
}

fn twogrid(args: &CommonArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let (problem, _) = config.build_problem()?;
    let mut options = TwoGridOptions {
        coarse: NewtonOptions { abs_tol: config.coarse_abs_tol, ..config.newton.clone() },
        ..Default::default()
    };
    options.linear.rtol = config.linear_rtol;
    options.linear.preconditioner = config.newton.preconditioner;
    let settings = TwoGridSettings {
        coarsest_n: config.twogrid_coarsest_n,
        fine_levels: config.fine_levels.clone(),
        s: config.s,
        tau: config.tau,
        snap: config.snap,
        options,
        newton: config.newton.clone(),
        reference_levels: config.reference_levels,
        timing: config.timing,
    };
    let study = twogrid_study(&problem, &settings)?;
    let dir = out_dir(&config)?;
    output::twogrid_csv(&dir.join("twogrid.csv"), &study)?;
    output::twogrid_dat(&dir.join("twogrid.dat"), &study)?;
    if args.json {
        print_json(&study);
    } else {
        println!("{:>12} {:>12} {:>16} {:>16} {:>8}", "h", "H", "err_direct", "err_twogrid", "ratio");
        for r in &study.rows {
            println!("{:>12.6e} {:>12.6e} {:>16.6e} {:>16.6e} {:>8.4}", r.h, r.coarse_h, r.err_energy_direct, r.err_energy_twogrid, r.ratio);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary {
    n: usize,
    h: f64,
    vertices: usize,
    min: f64,
    max: f64,
    report: SolveReport,
    solution: String,
}

fn solve(args: &CommonArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let (problem, _) = config.build_problem()?;
    let meshes = hierarchy(config.coarsest_n, &problem.geometry, config.levels)?;
    let mut u: Option<FemFunction> = None;
    let mut last_report = None;
    for mesh in &meshes {
        let initial = match &u {
            Some(prev) => tgfem::prolongate(prev, mesh).expect("hierarchy is nested"),
            None => FemFunction::zeros(Arc::clone(mesh)),
        };
        let (next, report) = newton_solve(mesh, &problem, initial, &config.newton)?;
        u = Some(next);
        last_report = Some(report);
    }
    let (u, report) = (u.unwrap(), last_report.unwrap());
    let dir = out_dir(&config)?;
    let path = dir.join("solution.csv");
    output::solution_csv(&path, &u)?;
    fs::write(dir.join("mesh.txt"), save_mesh(u.mesh()))?;
    let c = u.coefficients();
    let n = config.coarsest_n << (config.levels - 1);
    let summary = SolveSummary {
        n,
        h: problem.geometry.spacing(n),
        vertices: c.len(),
        min: c.iter().copied().fold(f64::INFINITY, f64::min),
        max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        report,
        solution: path.display().to_string(),
    };
    if args.json {
        print_json(&summary);
    } else {
        println!(
            "n = {} ({} vertices): {} Newton iterations, final residual {:.3e}, u in [{:.6}, {:.6}]",
            summary.n,
            summary.vertices,
            summary.report.iterations,
            summary.report.residual_history.last().unwrap(),
            summary.min,
            summary.max
        );
        if let Ok(b) = compute_barriers(&problem) {
            println!("barriers [{:.6}, {:.6}]", b.lower, b.upper);
        }
        println!("wrote {}", Path::new(&summary.solution).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::CheckMesh(a) => check_mesh(a),
        Command::Converge(a) => converge(a),
        Command::Twogrid(a) => twogrid(a),
        Command::Solve(a) => solve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
