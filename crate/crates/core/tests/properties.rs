use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tgfem::analysis::{element_gradient_norm_sq, energy_norm};
use tgfem::assembly::{apply_dirichlet, assemble_reaction_jacobian, assemble_stiffness, dirichlet_values, FemFunction};
use tgfem::mesh::{
    check_angle_condition, generate_interface_mesh, hierarchy, load_mesh, save_mesh, Geometry, InterfaceShape, Mesh, Rect,
};
use tgfem::problems::{builtin_problem, ProblemParams};
use tgfem::quadrature::QuadratureRule;
use tgfem::solvers::{newton_solve, pcg_solve, NewtonOptions, PcgOptions, SolverError};
use tgfem::twogrid::prolongate;
use tgfem::Diffusion;

fn geometry(kind: u8) -> Geometry {
    match kind % 3 {
        0 => Geometry::centered_box(),
        1 => Geometry::vertical_split(),
        _ => Geometry { domain: Rect::new(0.0, 2.0, 0.0, 1.0), interface: InterfaceShape::Box(Rect::new(0.5, 1.5, 0.25, 0.75)) },
    }
}

fn interior_vector(mesh: &Mesh, values: &[f64]) -> Vec<f64> {
    (0..mesh.n_vertices()).map(|i| if mesh.is_boundary(i) { 0.0 } else { values[i % values.len()] }).collect()
}

/// Barycentric evaluation by brute-force point location.
fn evaluate(u: &FemFunction, p: [f64; 2]) -> f64 {
    let mesh = u.mesh();
    for t in 0..mesh.n_triangles() {
        let c = mesh.corners(t);
        let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
        let l1 = ((p[0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (p[1] - c[0][1])) / det;
        let l2 = ((c[1][0] - c[0][0]) * (p[1] - c[0][1]) - (p[0] - c[0][0]) * (c[1][1] - c[0][1])) / det;
        let l0 = 1.0 - l1 - l2;
        if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
            return u.eval_local(t, &[l0, l1, l2]);
        }
    }
    panic!("point {p:?} outside the mesh")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mesh_text_round_trip(n in 1usize..5, kind in 0u8..3) {
        let g = geometry(kind);
        let n = 4 * n;
        let mesh = generate_interface_mesh(n, &g).unwrap();
        let back = load_mesh(&save_mesh(&mesh)).unwrap();
        prop_assert_eq!(back.vertices(), mesh.vertices());
        prop_assert_eq!(back.triangles(), mesh.triangles());
        prop_assert_eq!(back.boundary_flags(), mesh.boundary_flags());
        prop_assert_eq!(back.interface_edges(), mesh.interface_edges());
    }

    #[test]
    fn refinement_preserves_area_and_angles(kind in 0u8..3, d1 in 0.01f64..1e4, d2 in 0.01f64..1e4) {
        let g = geometry(kind);
        let d = Diffusion::new(d1, d2);
        for mesh in hierarchy(4, &g, 4).unwrap() {
            prop_assert!((mesh.total_area() - g.domain.area()).abs() <= 1e-12 * g.domain.area());
            prop_assert!(check_angle_condition(&mesh, &d).passes);
        }
    }

    #[test]
    fn stiffness_is_symmetric_with_constant_kernel(kind in 0u8..3, d1 in 0.01f64..1e4, d2 in 0.01f64..1e4) {
        let mesh = generate_interface_mesh(8, &geometry(kind)).unwrap();
        let a = assemble_stiffness(&mesh, &Diffusion::new(d1, d2));
        prop_assert!(a.asymmetry() <= 1e-14);
        let scale = d1.max(d2);
        for r in a.mul_vec(&vec![1.0; mesh.n_vertices()]) {
            prop_assert!(r.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn energy_sandwich(values in prop::collection::vec(-1.0f64..1.0, 1..64), d1 in 0.01f64..1e4, d2 in 0.01f64..1e4) {
        let mesh = Arc::new(generate_interface_mesh(8, &Geometry::centered_box()).unwrap());
        let d = Diffusion::new(d1, d2);
        let v = interior_vector(&mesh, &values);
        let grad_sq = element_gradient_norm_sq(&mesh, &v);
        let quad_form = assemble_stiffness(&mesh, &d).quadratic_form(&v);
        let slack = 1e-12 * d.max() * grad_sq.max(1.0);
        prop_assert!(d.min() * grad_sq <= quad_form + slack);
        prop_assert!(quad_form <= d.max() * grad_sq + slack);
        let e = energy_norm(&FemFunction::new(Arc::clone(&mesh), v).unwrap(), &d);
        prop_assert!((e * e - quad_form).abs() <= slack);
    }

    #[test]
    fn prolongation_is_exact_embedding(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 1.0f64..4.0, levels in 1usize..3) {
        let meshes = hierarchy(4, &Geometry::centered_box(), levels + 1).unwrap();
        let u = FemFunction::interpolate(Arc::clone(&meshes[0]), |p| a * (k * p[0]).sin() + b * p[1] * p[0]);
        let fine = prolongate(&u, meshes.last().unwrap()).unwrap();
        for (i, &p) in meshes.last().unwrap().vertices().iter().enumerate() {
            prop_assert!((fine.coefficients()[i] - evaluate(&u, p)).abs() <= 1e-13);
        }
        let d = Diffusion::new(1000.0, 1.0);
        prop_assert!((energy_norm(&fine, &d) - energy_norm(&u, &d)).abs() <= 1e-13 * energy_norm(&u, &d).max(1.0));
    }

    #[test]
    fn quadrature_integrates_random_polynomials(coeffs in prop::collection::vec(-1.0f64..1.0, 21), degree in 1u32..=10) {
        // sum c_ij x^i y^j over i + j <= min(degree, 5) on the unit triangle
        let rule = QuadratureRule::with_degree(degree);
        let top = degree.min(5) as i32;
        let mut exact = 0.0;
        let mut terms = Vec::new();
        let mut c = coeffs.iter();
        for i in 0..=top {
            for j in 0..=(top - i) {
                let cij = *c.next().unwrap();
                // int x^i y^j over the unit triangle = i! j! / (i + j + 2)!
                let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
                exact += cij * fact(i) * fact(j) / fact(i + j + 2);
                terms.push((i, j, cij));
            }
        }
        let approx: f64 = rule
            .iter()
            .map(|(l, w)| 0.5 * w * terms.iter().map(|&(i, j, cij)| cij * l[1].powi(i) * l[2].powi(j)).sum::<f64>())
            .sum();
        prop_assert!((approx - exact).abs() <= 1e-14);
    }
}

fn small_system(n: usize, reaction: f64) -> (tgfem::sparse::SparseMatrix, Vec<f64>) {
    let mesh = Arc::new(generate_interface_mesh(n, &Geometry::centered_box()).unwrap());
    let state = FemFunction::zeros(Arc::clone(&mesh));
    let a = assemble_stiffness(&mesh, &Diffusion::new(1000.0, 1.0))
        .add(&assemble_reaction_jacobian(&mesh, &state, |_, _| reaction, &QuadratureRule::default()));
    let rhs: Vec<f64> = mesh.vertices().iter().map(|p| (3.0 * p[0]).cos() + p[1]).collect();
    apply_dirichlet(a, rhs, &dirichlet_values(&mesh, |p| p[0] * p[1]))
}

#[test]
fn pcg_energy_error_is_monotone() {
    let (a, rhs) = small_system(8, 1.0);
    let dense = DMatrix::from_fn(a.n(), a.n(), |i, j| a.get(i, j));
    let exact = dense.clone().lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
    let a_norm = |x: &[f64]| {
        let e = DVector::from_column_slice(x) - &exact;
        (e.transpose() * &dense * &e)[(0, 0)].sqrt()
    };
    for pre in [tgfem::solvers::Preconditioner::Jacobi, tgfem::solvers::Preconditioner::None] {
        let mut previous = a_norm(&vec![0.0; a.n()]);
        for k in 1..60 {
            let opts = PcgOptions { rtol: 1e-15, max_iters: k, preconditioner: pre };
            let x = match pcg_solve(&a, &rhs, None, &opts) {
                Err(SolverError::NoConvergence { best, .. }) => best,
                Ok((x, _)) => x,
                Err(e) => panic!("{e}"),
            };
            let current = a_norm(&x);
            assert!(current <= previous * (1.0 + 1e-10) + 1e-14, "{pre:?} step {k}: {current} > {previous}");
            previous = current;
        }
    }
}

#[test]
fn constrained_operator_is_positive_definite() {
    for reaction in [0.0, 5.0] {
        let (a, _) = small_system(8, reaction);
        // inverse iteration for the smallest eigenvalue
        let mut x: Vec<f64> = (0..a.n()).map(|i| 1.0 + (i % 7) as f64).collect();
        let mut lambda = 0.0;
        for _ in 0..50 {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
            let (y, _) = pcg_solve(&a, &x, None, &PcgOptions { rtol: 1e-13, ..Default::default() }).unwrap();
            lambda = 1.0 / y.iter().map(|v| v * v).sum::<f64>().sqrt();
            x = y;
        }
        assert!(lambda > 0.0, "smallest eigenvalue estimate {lambda}");
    }
}

#[test]
fn newton_is_independent_of_initial_guess() {
    let params: ProblemParams = [("g".to_string(), 2.0), ("flux".to_string(), 0.0)].into_iter().collect();
    let problem = builtin_problem("sinh_pbe", &params).unwrap();
    let barriers = tgfem::problems::compute_barriers(&problem).unwrap();
    let mesh = Arc::new(generate_interface_mesh(16, &problem.geometry).unwrap());
    let opts = NewtonOptions { abs_tol: 1e-12, ..Default::default() };
    let solve = |f: &dyn Fn([f64; 2]) -> f64| newton_solve(&mesh, &problem, FemFunction::interpolate(Arc::clone(&mesh), f), &opts).unwrap().0;
    let base = solve(&|_| barriers.lower);
    let span = barriers.upper - barriers.lower;
    for guess in [
        Box::new(|_: [f64; 2]| barriers.upper) as Box<dyn Fn([f64; 2]) -> f64>,
        Box::new(|p: [f64; 2]| barriers.lower + 0.5 * span * (1.0 + (5.0 * p[0]).sin() * p[1])),
        Box::new(|p: [f64; 2]| if p[0] > 0.0 { barriers.upper } else { barriers.lower }),
    ] {
        let u = solve(&*guess);
        assert!(u.sub(&base).sup_norm() <= 1e-8, "{}", u.sub(&base).sup_norm());
    }
}

#[test]
fn assembly_is_deterministic() {
    let mesh = generate_interface_mesh(16, &Geometry::centered_box()).unwrap();
    let d = Diffusion::new(1000.0, 1.0);
    let a = assemble_stiffness(&mesh, &d);
    let b = assemble_stiffness(&mesh, &d);
    assert_eq!(a.values(), b.values());
}
