//! The invariant suite behind the `check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::Stage;
use super::stages::{Case, Cell, Pipeline};
use crate::error::{Error, Result};
use crate::finescale::{assemble_fine, lorentz_rotation, FineSolver};
use crate::kernel::{time_grid, volterra_forward, volterra_resolve};
use crate::linalg::{dot, norm, norm3};
use crate::macroscale::{InitialData, ScenarioSpec};
use crate::perfem::LinearOperator;
use crate::spectrum::check_pairs;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl CheckResult {
    /// Passes when value <= threshold.
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        CheckResult {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
        }
    }

    fn holds(name: &str, ok: bool) -> Self {
        CheckResult {
            name: name.into(),
            passed: ok,
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
        }
    }
}

/// max over probe pairs of |<Kx, y> - <x, Ky>| / (|Kx| |y| + |x| |Ky|).
fn symmetry_defect(op: &dyn LinearOperator, rng: &mut ChaCha8Rng, probes: usize) -> f64 {
    let n = op.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kx = op.apply_new(&x);
        let ky = op.apply_new(&y);
        let scale = norm(&kx) * norm(&y) + norm(&x) * norm(&ky);
        worst = worst.max((dot(&kx, &y) - dot(&x, &ky)).abs() / scale);
    }
    worst
}

fn ulps_off(a: f64, b: f64) -> f64 {
    (a - b).abs() / (f64::EPSILON * a.abs().max(f64::MIN_POSITIVE))
}

/// Runs every invariant; the stages it needs are loaded or built.
pub fn run_checks(p: &mut Pipeline) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    p.run_cell()?;
    {
        let cell = p.cell()?;
        let g = &cell.geom;
        out.push(CheckResult::holds(
            "phase_volumes_sum_to_one",
            g.inclusion_count() + (g.num_voxels() - g.inclusion_count()) == g.num_voxels()
                && g.inclusion_volume() + g.matrix_volume() == 1.0,
        ));
        let tol = crate::unitcell::COMPAT_TOL * cell.field.b_max * g.matrix_volume();
        out.push(CheckResult::at_most(
            "field_compatibility",
            norm3(cell.field.matrix_integral),
            tol,
        ));
        out.push(CheckResult::holds(
            "case_matches_interface_rank",
            (cell.case == Case::Ii) == (cell.rank.rank == 1),
        ));
    }

    let periodic = p.periodic()?;
    out.push(CheckResult::at_most(
        "periodic_operator_symmetry",
        symmetry_defect(&periodic.op, &mut rng, 3),
        1e-12,
    ));
    let ones: Vec<f64> = vec![1.0; periodic.op.dim()];
    let k1 = periodic.op.apply_new(&ones);
    let scale = periodic.op.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    out.push(CheckResult::at_most(
        "translations_in_kernel",
        norm(&k1) / (scale * norm(&ones)),
        1e-12,
    ));
    let forms = p.forms()?;
    out.push(CheckResult::at_most(
        "stiffness_form_symmetry",
        symmetry_defect(&forms.s, &mut rng, 3),
        1e-12,
    ));
    out.push(CheckResult::at_most(
        "mass_form_symmetry",
        symmetry_defect(&forms.m, &mut rng, 3),
        1e-12,
    ));

    let (modes, _) = p.modes(false)?.clone();
    let forms = p.forms()?;
    let pairs: Vec<(f64, Vec<f64>)> = modes.modes.iter().map(|m| (m.mu * m.mu, m.s.clone())).collect();
    let (res, orth) = check_pairs(&forms.s, &forms.m, &pairs);
    out.push(CheckResult::at_most(
        "eigen_residual",
        res,
        crate::spectrum::RESIDUAL_TOL,
    ));
    out.push(CheckResult::at_most("eigen_orthonormality", orth, 1e-8));
    out.push(CheckResult::holds(
        "eigenvalues_positive_nondecreasing",
        modes.modes.first().is_some_and(|m| m.mu > 0.0) && modes.modes.windows(2).all(|w| w[0].mu <= w[1].mu),
    ));

    let coeffs = p.coefficients(false)?.clone();
    let a = coeffs.a1star;
    let amax = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = (0..6)
        .flat_map(|i| (0..6).map(move |j| (i, j)))
        .map(|(i, j)| (a[i][j] - a[j][i]).abs())
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most("effective_tensor_symmetry", asym / amax, 1e-10));
    out.push(CheckResult::holds(
        "effective_tensor_elliptic",
        crate::perfem::ElasticTensor::from_voigt(a).is_ok(),
    ));

    if let Some(h) = &coeffs.homogenized {
        let scale = h.mstar.abs().max(h.mstar_quadratic.abs()).max(1e-300);
        out.push(CheckResult::at_most(
            "mstar_two_forms_agree",
            (h.mstar - h.mstar_quadratic).abs() / scale,
            1e-8,
        ));
        let weights: Vec<f64> = modes
            .modes
            .iter()
            .map(|m| crate::linalg::dot3(m.hbar, h.xi).powi(2))
            .collect();
        let defect = h.bhat_sq_integral - weights.iter().sum::<f64>();
        out.push(CheckResult::holds(
            "sum_rule_defect_nonnegative",
            defect >= -1e-10 * h.bhat_sq_integral,
        ));
        if coeffs.example_case {
            out.push(CheckResult::at_most(
                "example_Mstar_is_one",
                (h.big_mstar - 1.0).abs(),
                1e-8,
            ));
            out.push(CheckResult::holds("example_cstar_is_zero", h.cstar == 0.0));
            out.push(CheckResult::at_most(
                "example_lambdastar_vanishes",
                norm3(h.lambdastar),
                1e-8,
            ));
            let dev: [f64; 3] = std::array::from_fn(|i| h.mustar[i] - h.xi[i]);
            out.push(CheckResult::at_most("example_mustar_is_xi", norm3(dev), 1e-8));
        }

        let bundle = p.run_kernel()?;
        let kernel = bundle.memory_kernel(h.big_mstar);
        let t = time_grid(p.cfg.discretization.kernel.t_end, p.cfg.discretization.kernel.dt)?;
        let g: Vec<f64> = (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha = volterra_resolve(&kernel, &g)?;
        let back = volterra_forward(&kernel, &alpha)?;
        let err = back.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            / g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        out.push(CheckResult::at_most("volterra_roundtrip", err, 1e-12));
    }

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-10.0..10.0));
        let b: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-50.0..50.0));
        let w = lorentz_rotation(v, b, rng.gen_range(0.0..2.0));
        worst = worst.max(ulps_off(norm3(v), norm3(w)));
    }
    out.push(CheckResult::at_most("lorentz_substep_preserves_speed_ulps", worst, 4.0));

    out.push(fine_energy_check(p)?);

    let fp = p.cfg.fingerprint(Stage::Converge);
    p.store.write_json("check.json", &out, &fp)?;
    Ok(out)
}

/// Modified-energy drift over 1000 unforced steps at the coarsest eps.
fn fine_energy_check(p: &Pipeline) -> Result<CheckResult> {
    let cell = Cell::build(&p.cfg, &p.cfg.fine_geometry())?;
    let eps = p
        .cfg
        .discretization
        .fine
        .eps
        .iter()
        .copied()
        .reduce(f64::max)
        .unwrap_or(0.5);
    let coeffs = assemble_fine(&cell.geom, &cell.field, &cell.a1, &cell.a2, eps, 1)?;
    let bubble = "sin(pi*x1)*sin(pi*x2)*sin(pi*x3)";
    let data = InitialData::new(&ScenarioSpec {
        u0: [bubble.into(), "0".into(), bubble.into()],
        v0: ["0".into(), bubble.into(), "0".into()],
        f: ["0".into(), "0".into(), "0".into()],
    })?;
    let mut s = FineSolver::new(&coeffs, &data, 0.9 * coeffs.stable_dt)?;
    let e0 = s.energy().modified;
    for _ in 0..1000 {
        s.step()?;
    }
    let e1 = s.energy().modified;
    if !(e0 > 0.0) {
        return Err(Error::Numerical("energy probe has no energy".into()));
    }
    Ok(CheckResult::at_most(
        "fine_energy_drift_per_1000_steps",
        (e1 - e0).abs() / e0,
        1e-6,
    ))
}
