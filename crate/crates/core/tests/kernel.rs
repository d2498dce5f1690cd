mod common;

use common::*;
use maghom_core::kernel::{
    kernel_series, kernel_wave_oracle, kernel_wave_oracle_with_dt, resolvent_kernel, time_grid, volterra_forward,
    volterra_resolve, wave_stable_dt, MemoryKernel, ModalData,
};
use maghom_core::perfem::assemble_constrained_forms;
use maghom_core::spectrum::{solve_modes, EigenOptions};
use maghom_core::Error;
use proptest::prelude::*;

/// Single-mode kernel K = w cos(mu t) with mass m and g(t) = t. By Laplace
/// transform, c alpha^ (s^2 + omega^2) = (s^2 + mu^2) / s^2 with c = m - w
/// and omega^2 = mu^2 m / c, hence
///   alpha = ((mu/omega)^2 t + (1 - (mu/omega)^2) sin(omega t)/omega) / c.
fn single_mode_exact(m: f64, w: f64, mu: f64, t: f64) -> f64 {
    let c = m - w;
    let om = mu * (m / c).sqrt();
    let r = (mu / om).powi(2);
    (r * t + (1.0 - r) * (om * t).sin() / om) / c
}

fn single_mode_error(dt: f64) -> f64 {
    let (m, w, mu): (f64, f64, f64) = (1.0, 0.4, 7.0);
    let t = time_grid(1.0, dt).unwrap();
    let modal = ModalData::single(mu, [0.0, 0.0, w.sqrt()], 0.0, [0.0, 0.0, 1.0]);
    let k = kernel_series(&modal, &t, "").unwrap().memory_kernel(m);
    let alpha = volterra_resolve(&k, &t).unwrap();
    t.iter()
        .zip(&alpha)
        .map(|(ti, a)| (a - single_mode_exact(m, w, mu, *ti)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn volterra_matches_closed_form_at_second_order() {
    let dts = [0.02, 0.01, 0.005, 0.0025];
    let errs: Vec<f64> = dts.iter().map(|&dt| single_mode_error(dt)).collect();
    assert!(errs[3] < 1e-4, "{errs:?}");
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.9 && order < 2.1, "{errs:?}");
    }
}

#[test]
fn resolvent_reproduces_marching_solution() {
    let dt = 0.01;
    let t = time_grid(1.0, dt).unwrap();
    let modal = ModalData {
        mu: vec![3.0, 8.0, 13.0],
        hbar: vec![[0.0, 0.0, 0.5], [0.1, 0.0, 0.3], [0.0, 0.2, 0.2]],
        coupling: vec![0.0; 3],
        xi: [0.0, 0.0, 1.0],
    };
    let k = kernel_series(&modal, &t, "").unwrap().memory_kernel(1.0);
    let g: Vec<f64> = t.iter().map(|x| (2.0 * x).sin() + x * x).collect();
    let direct = volterra_resolve(&k, &g).unwrap();
    let r = resolvent_kernel(&k, t.len()).unwrap();
    let via = r.apply(&g);
    for (a, b) in direct.iter().zip(&via) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn series_matches_discrete_cube_spectrum() {
    // n = 8: 27 constrained unknowns, every mode retained
    let geom = cube_geometry(8);
    let field = example_field(&geom);
    let forms = assemble_constrained_forms(&unit_isotropic(), &field, &geom).unwrap();
    let (modes, _) = solve_modes(&forms, 27, &EigenOptions::default()).unwrap();
    assert_eq!(modes.len(), 27);
    let xi = [0.0, 0.0, 1.0];
    let modal = ModalData::from_modes(&modes, vec![0.0; 27], xi).unwrap();
    let t = time_grid(1.0, 0.05).unwrap();
    let series = kernel_series(&modal, &t, "").unwrap();
    // isotropic lambda = mu = 1 and xi = e3: A-hat = diag(1, 1, 3)
    let oracle = discrete_cube_modes(0.5, 1.0 / 8.0, [1.0, 1.0, 3.0]);
    for (ti, k) in t.iter().zip(&series.kbar1) {
        let want: f64 = oracle
            .iter()
            .map(|m| m.mean * m.mean * (m.lambda.sqrt() * ti).cos())
            .sum();
        assert!((k - want).abs() < 1e-12, "t = {ti}: {k} vs {want}");
    }
}

#[test]
fn wave_oracle_starts_at_inclusion_volume() {
    let geom = cube_geometry(8);
    let t = time_grid(0.2, 0.01).unwrap();
    let w = kernel_wave_oracle(&unit_isotropic(), &geom, [0.0, 0.0, 1.0], &t, 0.9).unwrap();
    assert_eq!(w.kbar1[0], geom.inclusion_volume());
    assert!(w.dt <= 0.9 * w.stable_dt);
    assert_eq!(w.kbar1.len(), t.len());
}

#[test]
fn wave_oracle_rejects_unstable_step() {
    let geom = cube_geometry(8);
    let a = unit_isotropic();
    let stable = wave_stable_dt(&a, &geom, [0.0, 0.0, 1.0]);
    let t = [0.0, 1.01 * stable];
    match kernel_wave_oracle_with_dt(&a, &geom, [0.0, 0.0, 1.0], &t, 1.01 * stable) {
        Err(Error::Cfl { .. }) => {}
        other => panic!("expected a CFL error, got {other:?}"),
    }
}

#[test]
fn wave_oracle_is_second_order_in_time() {
    let geom = cube_geometry(8);
    let a = unit_isotropic();
    let xi = [0.0, 0.0, 1.0];
    let stable = wave_stable_dt(&a, &geom, xi);
    let t = time_grid(0.5, 0.05).unwrap();
    // steps dividing 0.05, all below the stability limit
    let sub = (0.05 / (0.5 * stable)).ceil();
    let runs: Vec<Vec<f64>> = [1.0, 2.0, 4.0]
        .iter()
        .map(|f| {
            kernel_wave_oracle_with_dt(&a, &geom, xi, &t, 0.05 / (sub * f))
                .unwrap()
                .kbar1
        })
        .collect();
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ratio = d(&runs[0], &runs[1]) / d(&runs[1], &runs[2]);
    assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_inverts_resolve(
        mu in prop::collection::vec(0.5f64..20.0, 1..6),
        w in prop::collection::vec(0.0f64..0.15, 6),
        g in prop::collection::vec(-1.0f64..1.0, 60),
    ) {
        let n = mu.len();
        let modal = ModalData {
            mu: mu.clone(),
            hbar: (0..n).map(|i| [0.0, 0.0, w[i].sqrt()]).collect(),
            coupling: vec![0.0; n],
            xi: [0.0, 0.0, 1.0],
        };
        let t = time_grid(0.59, 0.01).unwrap();
        let k = kernel_series(&modal, &t, "").unwrap().memory_kernel(1.0);
        let alpha = volterra_resolve(&k, &g).unwrap();
        let back = volterra_forward(&k, &alpha).unwrap();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = back.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * scale);
    }

    // Linear in g.
    #[test]
    fn resolve_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let k = MemoryKernel::from_fn(1.0, |t| 0.3 * (5.0 * t).cos(), |t| -1.5 * (5.0 * t).sin(), 0.02, 51);
        let g1: Vec<f64> = (0..51).map(|i| (i as f64 * 0.02).sin()).collect();
        let g2: Vec<f64> = (0..51).map(|i| (i as f64 * 0.02).powi(2)).collect();
        let mix: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let r1 = volterra_resolve(&k, &g1).unwrap();
        let r2 = volterra_resolve(&k, &g2).unwrap();
        let rm = volterra_resolve(&k, &mix).unwrap();
        for i in 0..51 {
            prop_assert!((rm[i] - a * r1[i] - b * r2[i]).abs() <= 1e-12 * (1.0 + rm[i].abs()));
        }
    }
}
