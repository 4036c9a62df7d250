//! Assembly vs the independent correlation oracle, and the form invariants.

mod support;

use fucik_core::assemble::{assemble_mass, assemble_stiffness};
use fucik_core::config::ProblemConfig;
use fucik_core::energy::QuadPlan;
use fucik_core::mesh::build_mesh;
use nalgebra::DMatrix;

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let denom = b[(i, j)].abs().max(1e-300);
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / denom);
        }
    }
    worst
}

#[test]
fn oracle_agreement_unit_interval() {
    let cfg = ProblemConfig::unit_interval(0.5, 2.0, 8);
    let mesh = build_mesh(&cfg).unwrap();
    let a = assemble_stiffness(&mesh, 0.5, 12, cfg.effective_truncation_radius()).unwrap();
    let oracle = support::stiffness_oracle(&mesh, 0.5);
    let err = rel_err(&a, &oracle);
    assert!(err <= 1e-6, "entrywise relative error {err:.3e}");
}

#[test]
fn oracle_agreement_other_orders() {
    for s in [0.25, 0.75] {
        let cfg = ProblemConfig::unit_interval(s, 2.0, 6);
        let mesh = build_mesh(&cfg).unwrap();
        let a = assemble_stiffness(&mesh, s, 14, cfg.effective_truncation_radius()).unwrap();
        let oracle = support::stiffness_oracle(&mesh, s);
        let err = rel_err(&a, &oracle);
        assert!(err <= 1e-6, "s={s}: entrywise relative error {err:.3e}");
    }
}

#[test]
fn oracle_agreement_two_intervals() {
    let cfg = ProblemConfig::with_intervals(vec![(0.0, 1.0), (1.5, 2.2)], 0.5, 2.0, 6);
    let mesh = build_mesh(&cfg).unwrap();
    let a = assemble_stiffness(&mesh, 0.5, 14, cfg.effective_truncation_radius()).unwrap();
    let oracle = support::stiffness_oracle(&mesh, 0.5);
    let err = rel_err(&a, &oracle);
    assert!(err <= 1e-6, "entrywise relative error {err:.3e}");
}

#[test]
fn refinement_monotonicity_of_lowest_eigenvalue() {
    // smallest generalized eigenvalue of (A, M) with the consistent mass
    // decreases under uniform refinement (nested subspaces); stability is
    // allowed within quadrature tolerance
    let mut prev = f64::INFINITY;
    for n in [8u32, 16, 32, 64] {
        let cfg = ProblemConfig::unit_interval(0.5, 2.0, n);
        let mesh = build_mesh(&cfg).unwrap();
        let forms = fucik_core::GalerkinForms::assemble(&mesh, &cfg).unwrap();
        let dec = fucik_core::eigen::solve_eigen(&forms.stiffness, &forms.mass, 1e-6).unwrap();
        let l1 = dec.lambdas[0];
        assert!(
            l1 <= prev * (1.0 + 1e-8),
            "lambda1 increased under refinement: {prev} -> {l1} at n={n}"
        );
        prev = l1;
    }
}

#[test]
fn energy_p2_matches_quadratic_form_on_two_intervals() {
    let cfg = ProblemConfig::with_intervals(vec![(0.0, 1.0), (1.5, 2.2)], 0.5, 2.0, 6);
    let mesh = build_mesh(&cfg).unwrap();
    let r = cfg.effective_truncation_radius();
    let a = assemble_stiffness(&mesh, 0.5, 12, r).unwrap();
    let plan = QuadPlan::build(&mesh, 0.5, 2.0, 12, r).unwrap();
    let u = support::random_vector(mesh.n_dofs(), 42);
    let quad = u.dot(&(&a * &u));
    let en = plan.energy(&u).unwrap();
    assert!((quad - en).abs() <= 1e-11 * en.abs());
}

#[test]
fn mass_lumped_partition_of_unity_two_intervals() {
    let cfg = ProblemConfig::with_intervals(vec![(0.0, 1.0), (2.0, 3.5)], 0.5, 2.0, 4);
    let mesh = build_mesh(&cfg).unwrap();
    let (_, lumped) = assemble_mass(&mesh);
    // |domain| minus one boundary element half per interval end
    let h = 0.25;
    let want = 2.5 - 2.0 * h; // two intervals, two halves each
    let got: f64 = lumped.iter().sum();
    assert!((got - want).abs() < 1e-13, "{got} vs {want}");
}
