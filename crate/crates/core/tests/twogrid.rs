use std::sync::Arc;

use proptest::prelude::*;

use tgfem::analysis::{energy_norm, lp_norm, twogrid_bound_ratio};
use tgfem::assembly::{assemble_reaction_jacobian, assemble_stiffness, FemFunction};
use tgfem::mesh::hierarchy;
use tgfem::problems::{builtin_problem, ProblemParams};
use tgfem::quadrature::QuadratureRule;
use tgfem::solvers::{newton_solve, NewtonOptions};
use tgfem::study::{compare_pair, twogrid_study, TwoGridSettings};
use tgfem::twogrid::{linearized_solve, two_grid_solve, TwoGridOptions};

fn power11() -> tgfem::Problem {
    builtin_problem("power11", &ProblemParams::new()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn affine_two_grid_equals_direct(c in 0.0f64..50.0, d1 in 0.1f64..1e3, coarse in 0usize..2, gap in 1usize..3) {
        let params: ProblemParams = [("c".to_string(), c), ("d1".to_string(), d1)].into_iter().collect();
        let problem = builtin_problem("linear_reaction", &params).unwrap();
        let meshes = hierarchy(4, &problem.geometry, coarse + gap + 1).unwrap();
        let fine = &meshes[coarse + gap];
        let opts = TwoGridOptions::default();
        let tg = two_grid_solve(&meshes[coarse], fine, &problem, &opts).unwrap();
        let (direct, _) = newton_solve(fine, &problem, FemFunction::zeros(Arc::clone(fine)), &NewtonOptions::default()).unwrap();
        let scale = direct.sup_norm().max(1.0);
        prop_assert!(direct.sub(&tg.fine_solution).sup_norm() <= 10.0 * opts.linear.rtol * scale, "{}", direct.sub(&tg.fine_solution).sup_norm());
    }
}

#[test]
fn linear_problem_has_zero_bound_ratio() {
    let problem = builtin_problem("linear_reaction", &ProblemParams::new()).unwrap();
    let meshes = hierarchy(4, &problem.geometry, 3).unwrap();
    let o = compare_pair(2, &meshes[0], &meshes[2], &problem, &TwoGridOptions::default(), &NewtonOptions::default(), false).unwrap();
    let ratio = twogrid_bound_ratio(&o.direct, &o.two_grid.prolonged_coarse, &o.two_grid.fine_solution, &problem.diffusion).unwrap();
    assert!(ratio < 1e-8, "{ratio}");
}

#[test]
fn linearized_solve_improves_on_coarse_solution() {
    let problem = power11();
    let meshes = hierarchy(4, &problem.geometry, 6).unwrap();
    let o = compare_pair(5, &meshes[1], &meshes[5], &problem, &TwoGridOptions::default(), &NewtonOptions::default(), false).unwrap();
    let d = &problem.diffusion;
    let two_grid = energy_norm(&o.direct.sub(&o.two_grid.fine_solution), d);
    let coarse = energy_norm(&o.direct.sub(&o.two_grid.prolonged_coarse), d);
    assert!(two_grid < coarse, "{two_grid} vs {coarse}");
}

#[test]
fn remainder_is_bounded_by_second_derivative() {
    let problem = power11();
    let meshes = hierarchy(4, &problem.geometry, 4).unwrap();
    let (coarse, fine) = (&meshes[1], &meshes[3]);
    let o = compare_pair(3, coarse, fine, &problem, &TwoGridOptions::default(), &NewtonOptions { abs_tol: 1e-13, ..Default::default() }, false)
        .unwrap();
    let u_coarse = &o.two_grid.prolonged_coarse;
    let chi = o.direct.sub(&o.two_grid.fine_solution);
    let b = problem.nonlinearity.clone();
    let quad = QuadratureRule::default();
    let jacobian = assemble_stiffness(fine, &problem.diffusion).add(&assemble_reaction_jacobian(fine, u_coarse, |s, v| b.d1(s, v), &quad));
    let defect = jacobian.quadratic_form(chi.coefficients()).abs();

    let range = o.direct.sup_norm().max(u_coarse.sup_norm());
    let site = tgfem::problems::Site { point: [0.0, 0.0], region: tgfem::mesh::Region::One };
    let sup_b2 = b.d2(site, range).abs().max(b.d2(site, -range).abs());
    let e4 = lp_norm(&o.direct.sub(u_coarse), 4, &quad).unwrap();
    let chi4 = lp_norm(&chi, 4, &quad).unwrap();
    assert!(defect <= sup_b2 * e4 * e4 * chi4, "{defect} > {sup_b2} * {e4}^2 * {chi4}");
}

#[test]
fn fixed_point_of_linearized_solve() {
    let problem = power11();
    let meshes = hierarchy(8, &problem.geometry, 2).unwrap();
    let fine = &meshes[1];
    let opts = NewtonOptions { abs_tol: 1e-12, ..Default::default() };
    let (u, _) = newton_solve(fine, &problem, FemFunction::zeros(Arc::clone(fine)), &opts).unwrap();
    let (w, _) = linearized_solve(fine, &problem, &u, &opts, &TwoGridOptions::default().linear).unwrap();
    assert!(w.sub(&u).sup_norm() <= 1e-9 * u.sup_norm().max(1.0));
}

#[test]
fn study_rows_show_monotone_improvement() {
    let settings = TwoGridSettings { coarsest_n: 4, fine_levels: vec![2, 3, 4], reference_levels: 1, timing: false, ..Default::default() };
    let study = twogrid_study(&power11(), &settings).unwrap();
    for row in &study.rows {
        assert!(row.err_energy_twogrid <= row.err_energy_coarse, "{row:?}");
        assert!(row.coarse_h >= row.h);
    }
    assert_eq!(study.rows.iter().map(|r| r.coarse_h).collect::<Vec<_>>(), vec![0.5, 0.25, 0.25]);
}
