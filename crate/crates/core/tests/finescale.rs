mod common;

use std::f64::consts::PI;

use common::{cube_geometry, example_field, unit_isotropic};
use maghom_core::finescale::{assemble_fine, fitted_dt, lorentz_rotation, FineSolver};
use maghom_core::macroscale::{InitialData, ScenarioSpec};
use maghom_core::perfem::ElasticTensor;
use proptest::prelude::*;

fn scenario(u0: [&str; 3], v0: [&str; 3], f: [&str; 3]) -> InitialData {
    InitialData::new(&ScenarioSpec {
        u0: u0.map(String::from),
        v0: v0.map(String::from),
        f: f.map(String::from),
    })
    .unwrap()
}

const BUBBLE: &str = "sin(pi*x1)*sin(pi*x2)*sin(pi*x3)";

#[test]
fn tiling_counts_and_fractions() {
    let geom = cube_geometry(8);
    let field = example_field(&geom);
    let a1 = unit_isotropic();
    let a2 = ElasticTensor::isotropic(0.5, 0.3).unwrap();
    let half = assemble_fine(&geom, &field, &a1, &a2, 0.5, 1).unwrap();
    assert_eq!(half.inclusion_components(), 8);
    assert!((half.inclusion_fraction() - geom.inclusion_volume()).abs() < 1e-15);
    let q = assemble_fine(&geom, &field, &a1, &a2, 0.25, 1).unwrap();
    let e = assemble_fine(&geom, &field, &a1, &a2, 0.125, 1).unwrap();
    assert_eq!(q.inclusion_fraction(), e.inclusion_fraction());
    assert_eq!(e.inclusion_components(), 512);
    for (x, y) in q
        .soft_stiffness
        .voigt()
        .iter()
        .flatten()
        .zip(e.soft_stiffness.voigt().iter().flatten())
    {
        if *y != 0.0 {
            assert!((x / y - 4.0).abs() < 1e-13);
        }
    }
    let r = assemble_fine(&geom, &field, &a1, &a2, 0.5, 2).unwrap();
    assert_eq!(r.grid().nvox, 32);
    assert!((r.inclusion_fraction() - geom.inclusion_volume()).abs() < 1e-15);
}

#[test]
fn non_integer_inverse_eps_rejected() {
    let geom = cube_geometry(8);
    let field = example_field(&geom);
    let a = unit_isotropic();
    assert!(assemble_fine(&geom, &field, &a, &a, 0.3, 1).is_err());
    assert!(assemble_fine(&geom, &field, &a, &a, 0.0, 1).is_err());
}

#[test]
fn cfl_is_enforced() {
    let geom = cube_geometry(8);
    let field = example_field(&geom);
    let a = unit_isotropic();
    let c = assemble_fine(&geom, &field, &a, &a, 0.5, 1).unwrap();
    let data = scenario(["0"; 3], ["0"; 3], ["0"; 3]);
    assert!(FineSolver::new(&c, &data, 0.95 * c.stable_dt).is_err());
    assert!(FineSolver::new(&c, &data, 0.9 * c.stable_dt).is_ok());
}

fn ulp(x: f64) -> f64 {
    f64::EPSILON * x.abs()
}

proptest! {
    #[test]
    fn rotation_preserves_speed(
        v in prop::array::uniform3(-10.0f64..10.0),
        b in prop::array::uniform3(-50.0f64..50.0),
        tau in 0.0f64..2.0,
    ) {
        let w = lorentz_rotation(v, b, tau);
        let n0 = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let n1 = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        prop_assert!((n1 - n0).abs() <= 4.0 * ulp(n0), "{} vs {}", n0, n1);
    }

    #[test]
    fn rotation_keeps_the_axis_component(
        v in prop::array::uniform3(-10.0f64..10.0),
        b in prop::array::uniform3(-50.0f64..50.0),
        tau in 0.0f64..2.0,
    ) {
        let w = lorentz_rotation(v, b, tau);
        let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        prop_assume!(nb > 1e-3);
        let before = (v[0] * b[0] + v[1] * b[1] + v[2] * b[2]) / nb;
        let after = (w[0] * b[0] + w[1] * b[1] + w[2] * b[2]) / nb;
        prop_assert!((before - after).abs() <= 1e-13 * (1.0 + before.abs()));
    }
}

#[test]
fn rotation_is_the_lorentz_flow() {
    // v' = -(1/eps) b x v with b = e3: (v1, v2) rotates by -|b| t / eps.
    let v = [1.0, 0.0, 0.3];
    let w = lorentz_rotation(v, [0.0, 0.0, 2.0], 0.1);
    let th: f64 = -0.2;
    assert!((w[0] - th.cos()).abs() < 1e-15);
    assert!((w[1] - th.sin()).abs() < 1e-15);
    assert_eq!(w[2], 0.3);
    // derivative check at small tau
    let b = [0.3, -1.2, 0.7];
    let v = [0.4, 0.9, -0.2];
    let tau = 1e-6;
    let w = lorentz_rotation(v, b, tau);
    let bxv = [
        b[1] * v[2] - b[2] * v[1],
        b[2] * v[0] - b[0] * v[2],
        b[0] * v[1] - b[1] * v[0],
    ];
    for d in 0..3 {
        assert!(((w[d] - v[d]) / tau + bxv[d]).abs() < 1e-5);
    }
}

#[test]
fn energy_is_conserved_without_force() {
    let geom = cube_geometry(8);
    let field = example_field(&geom);
    let a1 = unit_isotropic();
    let a2 = ElasticTensor::isotropic(0.5, 0.4).unwrap();
    let c = assemble_fine(&geom, &field, &a1, &a2, 0.5, 1).unwrap();
    let data = scenario([BUBBLE, "0", "0"], ["0", "0.5", "1"], ["0"; 3]);
    let mut s = FineSolver::new(&c, &data, 0.9 * c.stable_dt).unwrap();
    let e0 = s.energy();
    for _ in 0..1000 {
        s.step().unwrap();
    }
    let e1 = s.energy();
    let drift = (e1.modified - e0.modified).abs() / e0.modified;
    println!(
        "energy drift over 1000 steps {drift:.3e}, plain-energy change {:.3e}",
        (e1.total - e0.total) / e0.total
    );
    assert!(drift <= 1e-6);
}

#[test]
fn energy_balance_with_force() {
    let geom = cube_geometry(8);
    let field = example_field(&geom);
    let a1 = unit_isotropic();
    let a2 = ElasticTensor::isotropic(0.5, 0.4).unwrap();
    let c = assemble_fine(&geom, &field, &a1, &a2, 0.5, 1).unwrap();
    let data = scenario(["0"; 3], ["0"; 3], ["cos(5*t)", "x2*t", "sin(pi*x1)"]);
    let mut s = FineSolver::new(&c, &data, 0.9 * c.stable_dt).unwrap();
    let mut prev = s.energy();
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        s.step().unwrap();
        let e = s.energy();
        let inc = e.modified - prev.modified;
        let w = e.work - prev.work;
        worst = worst.max((inc - w).abs() / e.modified.abs().max(1e-300));
        prev = e;
    }
    println!("worst per-step balance defect {worst:.3e}");
    assert!(worst <= 1e-8);
}

#[test]
fn initial_phase_averages() {
    let geom = cube_geometry(8);
    let field = example_field(&geom);
    let a = unit_isotropic();
    let data = scenario([BUBBLE, "0", BUBBLE], ["0"; 3], ["0"; 3]);
    let eps = 0.25;
    // eps^-3 int over a cell of chi_1 u0 by a midpoint rule 8 times finer than the mask
    let reference = |centre: [f64; 3]| {
        let m = 64;
        let mut acc = [0.0; 3];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let y = [
                        (i as f64 + 0.5) / m as f64,
                        (j as f64 + 0.5) / m as f64,
                        (k as f64 + 0.5) / m as f64,
                    ];
                    if geom.is_inclusion(geom.voxel_index(i / 8, j / 8, k / 8)) {
                        continue;
                    }
                    let x: [f64; 3] = std::array::from_fn(|d| centre[d] + eps * (y[d] - 0.5));
                    let u = data.u0(x);
                    for d in 0..3 {
                        acc[d] += u[d];
                    }
                }
            }
        }
        acc.map(|v| v / (m * m * m) as f64)
    };
    let mut errs = Vec::new();
    let mut centre_dev: f64 = 0.0;
    for refine in [1, 2] {
        let c = assemble_fine(&geom, &field, &a, &a, eps, refine).unwrap();
        let s = FineSolver::new(&c, &data, 0.5 * c.stable_dt).unwrap();
        let avg = s.phase_average();
        let mut e: f64 = 0.0;
        for (k, x) in avg.centers.iter().enumerate() {
            let r = reference(*x);
            let u = data.u0(*x);
            for d in 0..3 {
                e = e.max((avg.hard[k][d] - r[d]).abs());
                centre_dev = centre_dev.max((avg.hard[k][d] - geom.matrix_volume() * u[d]).abs());
            }
        }
        errs.push(e);
    }
    println!("t = 0 hard-phase sampling error {errs:?}, deviation from |Y1| u0(centre) {centre_dev:.3e}");
    assert!(errs[0] / errs[1] > 3.5);
    // the centre value differs from the cell mean by O(eps^2)
    assert!(centre_dev < eps * eps);
}

/// Cubic tensor with C12 + C44 = 0: u = S e3, S = sin(pi x1) sin(pi x2) sin(pi x3),
/// is an exact Dirichlet eigenmode with omega^2 = pi^2 (C11 + 2 C44).
fn decoupled_cubic() -> ElasticTensor {
    let (c11, c12, c44) = (3.0, -1.0, 1.0);
    let mut v = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            v[i][j] = if i == j { c11 } else { c12 };
        }
        v[i + 3][i + 3] = c44;
    }
    ElasticTensor::from_voigt(v).unwrap()
}

fn standing_wave_frequency(refine: usize) -> f64 {
    let geom = cube_geometry(8);
    let field = example_field(&geom);
    let a = decoupled_cubic();
    let mut c = assemble_fine(&geom, &field, &a, &a, 1.0, refine).unwrap();
    c.node_b.iter_mut().for_each(|b| *b = [0.0; 3]);
    let data = scenario(["0", "0", BUBBLE], ["0"; 3], ["0"; 3]);
    let omega = (5.0f64).sqrt() * PI;
    let quarter = 0.5 * PI / omega;
    let dt = fitted_dt(quarter / 8.0, c.stable_dt);
    let mut s = FineSolver::new(&c, &data, dt).unwrap();
    let g = *c.grid();
    let centre = g.node_index([g.nvox / 2; 3]);
    let k = c.op.node_unknown(centre).unwrap();
    let u_init = s.state().u[3 * k + 2];
    let steps = (0.8 * quarter / dt).round() as usize;
    for _ in 0..steps {
        s.step().unwrap();
    }
    (s.state().u[3 * k + 2] / u_init).acos() / s.time()
}

#[test]
fn standing_wave_frequency_second_order() {
    let omega = (5.0f64).sqrt() * PI;
    let e1 = (standing_wave_frequency(1) - omega).abs() / omega;
    let e2 = (standing_wave_frequency(2) - omega).abs() / omega;
    println!("standing-wave frequency errors {e1:.3e} {e2:.3e}");
    assert!(e1 / e2 > 3.5 && e2 < 0.01);
}
