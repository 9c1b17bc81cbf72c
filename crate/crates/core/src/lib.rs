//! Piecewise-linear finite elements for semilinear elliptic problems with a
//! discontinuous diffusion coefficient, and a two-grid solver for them.

pub mod analysis;
pub mod assembly;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod solvers;
pub mod sparse;
pub mod study;
pub mod twogrid;

pub use assembly::FemFunction;
pub use mesh::{generate_interface_mesh, refine_uniform, Geometry, Mesh, MeshError};
pub use problems::{builtin_problem, Diffusion, Problem, ProblemParams};
pub use solvers::{newton_solve, pcg_solve, NewtonOptions, PcgOptions};
pub use twogrid::{prolongate, select_coarse_size, two_grid_solve, TwoGridOptions};
