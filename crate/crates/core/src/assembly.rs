//! P1 operators and load vectors.

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{Mesh, Point};
use crate::problems::{Diffusion, Problem, Site};
use crate::quadrature::{edge_gauss2, QuadratureRule};
use crate::sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("degenerate triangle with area {0}")]
    DegenerateTriangle(f64),
    #[error("point ({}, {}) is not a mesh vertex", .0[0], .0[1])]
    NotAVertex(Point),
    #[error("expected {expected} coefficients, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Piecewise linear function given by its nodal values on a mesh.
#[derive(Debug, Clone)]
pub struct FemFunction {
    mesh: Arc<Mesh>,
    coefficients: Vec<f64>,
}

impl FemFunction {
    pub fn new(mesh: Arc<Mesh>, coefficients: Vec<f64>) -> Result<Self, AssemblyError> {
        if coefficients.len() != mesh.n_vertices() {
            return Err(AssemblyError::LengthMismatch { expected: mesh.n_vertices(), got: coefficients.len() });
        }
        Ok(FemFunction { mesh, coefficients })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.n_vertices();
        FemFunction { mesh, coefficients: vec![0.0; n] }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Self {
        let coefficients = mesh.vertices().iter().map(|&p| f(p)).collect();
        FemFunction { mesh, coefficients }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    /// `self - other` on the same mesh.
    pub fn sub(&self, other: &FemFunction) -> FemFunction {
        assert!(Arc::ptr_eq(&self.mesh, &other.mesh), "functions live on different meshes");
        let coefficients = self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a - b).collect();
        FemFunction { mesh: Arc::clone(&self.mesh), coefficients }
    }

    pub fn sup_norm(&self) -> f64 {
        self.coefficients.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value on triangle `t` at barycentric point `lambda`.
    pub fn eval_local(&self, t: usize, lambda: &[f64; 3]) -> f64 {
        let v = self.mesh.triangles()[t].vertices;
        lambda[0] * self.coefficients[v[0]] + lambda[1] * self.coefficients[v[1]] + lambda[2] * self.coefficients[v[2]]
    }

    /// Constant gradient on triangle `t`.
    pub fn gradient(&self, t: usize) -> [f64; 2] {
        let (_, grads) = barycentric_gradients(self.mesh.corners(t));
        let v = self.mesh.triangles()[t].vertices;
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += self.coefficients[v[k]] * grads[k][0];
            g[1] += self.coefficients[v[k]] * grads[k][1];
        }
        g
    }
}

/// Area and gradients of the three barycentric coordinates.
pub fn barycentric_gradients(p: [Point; 3]) -> (f64, [[f64; 2]; 3]) {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
    let grads = [0, 1, 2].map(|k| {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2]
    });
    (0.5 * area2, grads)
}

/// Physical point at barycentric coordinates `lambda`.
pub fn map_point(p: &[Point; 3], lambda: &[f64; 3]) -> Point {
    [
        lambda[0] * p[0][0] + lambda[1] * p[1][0] + lambda[2] * p[2][0],
        lambda[0] * p[0][1] + lambda[1] * p[1][1] + lambda[2] * p[2][1],
    ]
}

/// `K_ij = D * area * grad(lambda_i) . grad(lambda_j)`.
pub fn local_stiffness(p: [Point; 3], d: f64) -> Result<[[f64; 3]; 3], AssemblyError> {
    let (area, g) = barycentric_gradients(p);
    if !(area > 0.0) {
        return Err(AssemblyError::DegenerateTriangle(area));
    }
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = d * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    Ok(k)
}

/// Unconstrained stiffness matrix of `a(u, v) = int D grad u . grad v`.
pub fn assemble_stiffness(mesh: &Mesh, diffusion: &Diffusion) -> SparseMatrix {
    let pattern = mesh.pattern();
    let mut a = SparseMatrix::zeros(pattern, true);
    let values = a.values_mut();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = local_stiffness(mesh.corners(t), diffusion.get(tri.region)).expect("validated meshes have positive areas");
        let slots = pattern.element_slots(t);
        for i in 0..3 {
            for j in 0..3 {
                values[slots[3 * i + j]] += k[i][j];
            }
        }
    }
    a
}

/// `M_ij = int w(x, u(x)) phi_j phi_i` by quadrature, with `w = b'` for the Newton Jacobian.
pub fn assemble_reaction_jacobian(
    mesh: &Mesh,
    state: &FemFunction,
    weight: impl Fn(Site, f64) -> f64,
    quad: &QuadratureRule,
) -> SparseMatrix {
    let pattern = mesh.pattern();
    let mut m = SparseMatrix::zeros(pattern, true);
    let values = m.values_mut();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let corners = mesh.corners(t);
        let area = mesh.area(t);
        let mut local = [0.0; 9];
        for (lambda, w) in quad.iter() {
            let site = Site { point: map_point(&corners, lambda), region: tri.region };
            let c = w * area * weight(site, state.eval_local(t, lambda));
            for i in 0..3 {
                for j in 0..3 {
                    local[3 * i + j] += c * lambda[i] * lambda[j];
                }
            }
        }
        let slots = pattern.element_slots(t);
        for (slot, v) in slots.iter().zip(local) {
            values[*slot] += v;
        }
    }
    m
}

/// `v_i = int g(x, u(x)) phi_i` by quadrature.
pub fn assemble_state_load(
    mesh: &Mesh,
    state: &FemFunction,
    g: impl Fn(Site, f64) -> f64,
    quad: &QuadratureRule,
) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let corners = mesh.corners(t);
        let area = mesh.area(t);
        for (lambda, w) in quad.iter() {
            let site = Site { point: map_point(&corners, lambda), region: tri.region };
            let c = w * area * g(site, state.eval_local(t, lambda));
            for (k, &v) in tri.vertices.iter().enumerate() {
                load[v] += c * lambda[k];
            }
        }
    }
    load
}

/// `v_i = int f phi_i` by quadrature.
pub fn assemble_volume_load(mesh: &Mesh, f: impl Fn(Site) -> f64, quad: &QuadratureRule) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let corners = mesh.corners(t);
        let area = mesh.area(t);
        for (lambda, w) in quad.iter() {
            let c = w * area * f(Site { point: map_point(&corners, lambda), region: tri.region });
            for (k, &v) in tri.vertices.iter().enumerate() {
                load[v] += c * lambda[k];
            }
        }
    }
    load
}

/// Nodal delta load; `location` must coincide with a vertex.
pub fn assemble_point_load(mesh: &Mesh, location: Point, magnitude: f64) -> Result<Vec<f64>, AssemblyError> {
    let v = mesh.find_vertex(location, 1e-12).ok_or(AssemblyError::NotAVertex(location))?;
    let mut load = vec![0.0; mesh.n_vertices()];
    load[v] = magnitude;
    Ok(load)
}

/// `v_i = sum over interface edges of int_e g phi_i ds`, two-point Gauss per edge.
pub fn assemble_interface_flux(mesh: &Mesh, g: impl Fn(Point) -> f64) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_vertices()];
    for &[a, b] in mesh.interface_edges() {
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        for (s, w) in edge_gauss2() {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let c = w * len * g(x);
            load[a] += c * (1.0 - s);
            load[b] += c * s;
        }
    }
    load
}

/// All state-independent loads of `problem`: volume source, point source and interface flux.
pub fn assemble_load(mesh: &Mesh, problem: &Problem, quad: &QuadratureRule) -> Result<Vec<f64>, AssemblyError> {
    let mut load = match &problem.volume_source {
        Some(src) => assemble_volume_load(mesh, &*src.f, quad),
        None => vec![0.0; mesh.n_vertices()],
    };
    if let Some(ps) = &problem.point_source {
        for (l, p) in load.iter_mut().zip(assemble_point_load(mesh, ps.location, ps.magnitude)?) {
            *l += p;
        }
    }
    if let Some(g) = &problem.interface_flux {
        for (l, p) in load.iter_mut().zip(assemble_interface_flux(mesh, &**g)) {
            *l += p;
        }
    }
    Ok(load)
}

/// Operators of the discrete problem that do not depend on the state.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub stiffness: SparseMatrix,
    pub load: Vec<f64>,
    /// Boundary vertices with their Dirichlet values.
    pub constraints: Vec<(usize, f64)>,
}

impl DiscreteSystem {
    pub fn new(mesh: &Mesh, problem: &Problem, quad: &QuadratureRule) -> Result<Self, AssemblyError> {
        Ok(DiscreteSystem {
            stiffness: assemble_stiffness(mesh, &problem.diffusion),
            load: assemble_load(mesh, problem, quad)?,
            constraints: dirichlet_values(mesh, &*problem.dirichlet.g),
        })
    }

    /// `r_i = a(u, phi_i) + (b(u), phi_i) - <load, phi_i>`, zero on Dirichlet rows.
    pub fn residual(&self, state: &FemFunction, problem: &Problem, quad: &QuadratureRule) -> Vec<f64> {
        let b = problem.nonlinearity.as_ref();
        let mut r = self.stiffness.mul_vec(state.coefficients());
        let reaction = assemble_state_load(state.mesh(), state, |s, u| b.eval(s, u), quad);
        for ((ri, bi), li) in r.iter_mut().zip(reaction).zip(&self.load) {
            *ri += bi - li;
        }
        for &(i, _) in &self.constraints {
            r[i] = 0.0;
        }
        r
    }
}

/// Residual of the discrete semilinear problem, with Dirichlet rows zeroed.
pub fn assemble_semilinear_residual(
    mesh: &Mesh,
    state: &FemFunction,
    problem: &Problem,
    quad: &QuadratureRule,
) -> Result<Vec<f64>, AssemblyError> {
    Ok(DiscreteSystem::new(mesh, problem, quad)?.residual(state, problem, quad))
}

/// Boundary vertices paired with `g` evaluated there.
pub fn dirichlet_values(mesh: &Mesh, g: impl Fn(Point) -> f64) -> Vec<(usize, f64)> {
    mesh.boundary_vertices().into_iter().map(|v| (v, g(mesh.vertices()[v]))).collect()
}

/// Symmetric elimination of Dirichlet constraints: constrained rows and
/// columns become identity, their column contributions move to the right-hand
/// side, and the constrained right-hand side entries hold the prescribed values.
pub fn apply_dirichlet(
    mut matrix: SparseMatrix,
    mut rhs: Vec<f64>,
    constraints: &[(usize, f64)],
) -> (SparseMatrix, Vec<f64>) {
    let n = matrix.n();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &(i, g) in constraints {
        fixed[i] = Some(g);
    }
    let (offsets, cols, values) = matrix.parts_mut();
    for i in 0..n {
        for k in offsets[i]..offsets[i + 1] {
            let j = cols[k];
            match (fixed[i], fixed[j]) {
                (None, None) => {}
                (None, Some(g)) => {
                    rhs[i] -= values[k] * g;
                    values[k] = 0.0;
                }
                (Some(_), _) => values[k] = if i == j { 1.0 } else { 0.0 },
            }
        }
    }
    for &(i, g) in constraints {
        rhs[i] = g;
    }
    (matrix, rhs)
}
