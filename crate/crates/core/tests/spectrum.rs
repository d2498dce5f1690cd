mod common;

use common::*;
use maghom_core::linalg::dot3;
use maghom_core::perfem::{assemble_constrained_forms, ElasticTensor};
use maghom_core::spectrum::{solve_modes, sum_rule_defect, EigenOptions};
use maghom_core::unitcell::{build_geometry, sample_field, FieldSpec, GeometryConfig, ShapeKind, Support};

#[test]
fn cube_modes_match_discrete_separable_solution() {
    let geom = cube_geometry(16);
    let field = example_field(&geom);
    let a2 = unit_isotropic();
    let forms = assemble_constrained_forms(&a2, &field, &geom).unwrap();
    let (modes, _) = solve_modes(&forms, 30, &EigenOptions::default()).unwrap();
    let oracle = discrete_cube_modes(0.5, 1.0 / 16.0, [1.0, 1.0, 3.0]);
    for (m, o) in modes.modes.iter().zip(&oracle) {
        assert!(
            (m.mu * m.mu - o.lambda).abs() <= 1e-9 * o.lambda,
            "{} vs {}",
            m.mu * m.mu,
            o.lambda
        );
    }
}

#[test]
fn lanczos_path_matches_discrete_separable_solution() {
    // n = 24 gives 11^3 = 1331 unknowns, above the dense threshold.
    let geom = cube_geometry(24);
    let field = example_field(&geom);
    let forms = assemble_constrained_forms(&unit_isotropic(), &field, &geom).unwrap();
    let t = std::time::Instant::now();
    let (modes, rep) = solve_modes(&forms, 40, &EigenOptions::default()).unwrap();
    eprintln!("lanczos n=24 N=40: {:?} {:?}", t.elapsed(), rep);
    let oracle = discrete_cube_modes(0.5, 1.0 / 24.0, [1.0, 1.0, 3.0]);
    for (m, o) in modes.modes.iter().zip(&oracle) {
        assert!((m.mu * m.mu - o.lambda).abs() <= 1e-9 * o.lambda);
    }
    // captured mass per eigenvalue cluster
    let xi = [0.0, 0.0, 1.0];
    let mut i = 0;
    while i < 40 {
        let lam = oracle[i].lambda;
        let mut j = i;
        let (mut a, mut b) = (0.0, 0.0);
        while j < oracle.len() && (oracle[j].lambda - lam).abs() < 1e-9 * lam {
            if j < 40 {
                a += dot3(modes.modes[j].hbar, xi).powi(2);
            }
            b += oracle[j].mean.powi(2);
            j += 1;
        }
        if j <= 40 {
            assert!((a - b).abs() < 1e-9, "cluster at {lam}: {a} vs {b}");
        }
        i = j;
    }
}

#[test]
fn orthonormal_and_residual_contract() {
    let geom = cube_geometry(16);
    let field = example_field(&geom);
    let forms = assemble_constrained_forms(&unit_isotropic(), &field, &geom).unwrap();
    let (_, rep) = solve_modes(&forms, 25, &EigenOptions::default()).unwrap();
    assert!(rep.max_residual <= 1e-8);
    assert!(rep.max_orthogonality_defect <= 1e-8);
}

#[test]
fn even_modes_have_no_mean() {
    let geom = cube_geometry(16);
    let field = example_field(&geom);
    let forms = assemble_constrained_forms(&unit_isotropic(), &field, &geom).unwrap();
    let (modes, _) = solve_modes(&forms, 2, &EigenOptions::default()).unwrap();
    // second eigenvalue (index (2,1,1) and (1,2,1)) is even along one axis
    assert!(modes.modes[1].hbar[2].abs() < 1e-10);
    assert!(modes.modes[0].hbar[2].abs() > 1e-3);
}

#[test]
fn sum_rule_is_monotone_and_bounded() {
    let geom = cube_geometry(16);
    let field = example_field(&geom);
    let forms = assemble_constrained_forms(&unit_isotropic(), &field, &geom).unwrap();
    let (modes, _) = solve_modes(&forms, 60, &EigenOptions::default()).unwrap();
    let xi = [0.0, 0.0, 1.0];
    let mut prev = field.bhat_sq_integral;
    assert_eq!(
        sum_rule_defect(&modes.truncated(0), field.bhat_sq_integral, xi),
        geom.inclusion_volume()
    );
    for k in 1..=60 {
        let d = sum_rule_defect(&modes.truncated(k), field.bhat_sq_integral, xi);
        assert!(d >= 0.0 && d <= prev + 1e-15);
        prev = d;
    }
}

#[test]
fn scaling_the_tensor_scales_the_spectrum() {
    let geom = cube_geometry(16);
    let field = example_field(&geom);
    let a = ElasticTensor::isotropic(1.3, 0.8).unwrap();
    let f1 = assemble_constrained_forms(&a, &field, &geom).unwrap();
    let f2 = assemble_constrained_forms(&a.scaled(2.5), &field, &geom).unwrap();
    let (m1, _) = solve_modes(&f1, 6, &EigenOptions::default()).unwrap();
    let (m2, _) = solve_modes(&f2, 6, &EigenOptions::default()).unwrap();
    for (x, y) in m1.modes.iter().zip(&m2.modes) {
        assert!((y.mu * y.mu - 2.5 * x.mu * x.mu).abs() <= 1e-8 * y.mu * y.mu);
    }
    // nondegenerate lowest mode: same mean up to sign
    assert!((m1.modes[0].hbar[2].abs() - m2.modes[0].hbar[2].abs()).abs() < 1e-10);
}

#[test]
fn axis_relabeling_leaves_spectrum_invariant() {
    let cfg = |center: [f64; 3]| GeometryConfig {
        shape: ShapeKind::Ball,
        center,
        size: 0.3,
        n: 16,
    };
    let g1 = build_geometry(&cfg([0.45, 0.5, 0.55])).unwrap();
    let g2 = build_geometry(&cfg([0.55, 0.5, 0.45])).unwrap();
    let a = unit_isotropic();
    let spec = |xi: [f64; 3]| FieldSpec::FixedDirection {
        xi,
        gamma: "1".into(),
        support: Support::Inclusion,
    };
    let f1 = sample_field(&spec([0.0, 0.0, 1.0]), &g1).unwrap();
    let f2 = sample_field(&spec([1.0, 0.0, 0.0]), &g2).unwrap();
    let (m1, _) = solve_modes(
        &assemble_constrained_forms(&a, &f1, &g1).unwrap(),
        8,
        &EigenOptions::default(),
    )
    .unwrap();
    let (m2, _) = solve_modes(
        &assemble_constrained_forms(&a, &f2, &g2).unwrap(),
        8,
        &EigenOptions::default(),
    )
    .unwrap();
    for (x, y) in m1.modes.iter().zip(&m2.modes) {
        assert!((x.mu - y.mu).abs() <= 1e-8 * x.mu);
    }
}
