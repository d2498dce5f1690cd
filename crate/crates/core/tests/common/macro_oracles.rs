use std::f64::consts::PI;

use maghom_core::kernel::ModalData;
use maghom_core::macroscale::{InitialData, MacroCoefficients, MacroGrid, MacroSolver, ScenarioSpec};
use maghom_core::perfem::ElasticTensor;

pub const XI: [f64; 3] = [0.0, 0.0, 1.0];
pub const DIAG: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn coeffs(
    modal: ModalData,
    mstar: f64,
    cstar: f64,
    lambdastar: [f64; 3],
    a1dir: [[f64; 3]; 3],
) -> MacroCoefficients {
    MacroCoefficients {
        mstar,
        cstar,
        lambdastar,
        mustar: modal.xi,
        a1star: *ElasticTensor::isotropic(0.8, 0.6).unwrap().voigt(),
        a1dir,
        matrix_volume: 0.7,
        inclusion_volume: 0.3,
        bhat_integral: [0.0, 0.0, 0.3],
        example_case: true,
        modal,
    }
}

pub fn no_modes() -> ModalData {
    ModalData {
        mu: vec![],
        hbar: vec![],
        coupling: vec![],
        xi: XI,
    }
}

pub fn scenario(u0: [&str; 3], v0: [&str; 3], f: [&str; 3]) -> InitialData {
    InitialData::new(&ScenarioSpec {
        u0: u0.map(String::from),
        v0: v0.map(String::from),
        f: f.map(String::from),
    })
    .unwrap()
}

/// alpha = S(x) (1 - cos(w t)), S = sin(pi x1) sin(pi x2) sin(pi x3), no memory,
/// with drift, mass and a full symmetric A1dir; f carries the matching source.
/// Returns the max nodal error at t_end.
pub fn manufactured_error(cells: usize, dt: f64, t_end: f64) -> f64 {
    let w = 3.0;
    let mstar = 1.3;
    let cstar = 0.4;
    let lam = [0.3, -0.2, 0.1];
    let d = [[1.0, 0.2, 0.1], [0.2, 0.8, -0.15], [0.1, -0.15, 1.2]];
    let s = "sin(pi*x1)*sin(pi*x2)*sin(pi*x3)";
    let dsdx = [
        "pi*cos(pi*x1)*sin(pi*x2)*sin(pi*x3)",
        "pi*sin(pi*x1)*cos(pi*x2)*sin(pi*x3)",
        "pi*sin(pi*x1)*sin(pi*x2)*cos(pi*x3)",
    ];
    let mixed = |a: usize, b: usize| {
        let mut f = ["sin(pi*x1)", "sin(pi*x2)", "sin(pi*x3)"];
        let c = ["cos(pi*x1)", "cos(pi*x2)", "cos(pi*x3)"];
        f[a] = c[a];
        f[b] = c[b];
        format!("pi*pi*{}*{}*{}", f[0], f[1], f[2])
    };
    // div(D grad S) = -pi^2 tr(D) S + 2 sum_{a<b} D_ab d_a d_b S
    let mut div = format!("(0 - pi*pi*{}*{s})", d[0][0] + d[1][1] + d[2][2]);
    for a in 0..3 {
        for b in a + 1..3 {
            div = format!("{div} + 2*({})*{}", d[a][b], mixed(a, b));
        }
    }
    let drift = format!(
        "({})*{} + ({})*{} + ({})*{}",
        lam[0], dsdx[0], lam[1], dsdx[1], lam[2], dsdx[2]
    );
    let src = format!(
        "{mstar}*{w}*{w}*cos({w}*t)*{s} - (1 - cos({w}*t))*({div}) + {cstar}*(1 - cos({w}*t))*{s} + {w}*sin({w}*t)*({drift})"
    );
    let data = scenario(["0"; 3], ["0"; 3], ["0", "0", src.as_str()]);
    let grid = MacroGrid::dirichlet(cells).unwrap();
    let c = coeffs(no_modes(), mstar, cstar, lam, d);
    let mut solver = MacroSolver::new(grid, c, &data, dt).unwrap();
    solver.run(t_end, |_| Ok(())).unwrap();
    let t = solver.time();
    let mut err: f64 = 0.0;
    for p in 0..grid.len() {
        let x = grid.position(p);
        let exact = (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin() * (1.0 - (w * t).cos());
        err = err.max((solver.state().alpha[p] - exact).abs());
    }
    err
}

/// Dense RK4 reference for one mode and spatially constant data.
/// State: alpha, alpha', r, z, G, G'.
#[allow(clippy::too_many_arguments)]
pub fn scalar_reference(
    mu: f64,
    hxi: f64,
    hv: f64,
    hf: f64,
    c: f64,
    mstar: f64,
    cstar: f64,
    fxi: f64,
    t_end: f64,
    steps: usize,
) -> Vec<f64> {
    let a = hxi * hxi;
    let kappa = c * hxi;
    let rhs = |t: f64, y: &[f64; 6]| -> [f64; 6] {
        let g = y[4];
        let force = (mu * hxi - c / mu) * (mu * t).sin() * hv - hxi * (hf - mu * mu * g) - c * g;
        let acc = (fxi + force - cstar * y[0] - (a * mu * mu - kappa) * y[2]) / (mstar - a);
        [y[1], acc, y[1] - mu * y[3], mu * y[2], y[5], hf - mu * mu * g]
    };
    let h = t_end / steps as f64;
    let mut y = [0.0; 6];
    let mut out = vec![0.0];
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = rhs(t, &y);
        let y2: [f64; 6] = std::array::from_fn(|i| y[i] + 0.5 * h * k1[i]);
        let k2 = rhs(t + 0.5 * h, &y2);
        let y3: [f64; 6] = std::array::from_fn(|i| y[i] + 0.5 * h * k2[i]);
        let k3 = rhs(t + 0.5 * h, &y3);
        let y4: [f64; 6] = std::array::from_fn(|i| y[i] + h * k3[i]);
        let k4 = rhs(t + h, &y4);
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        out.push(y[0]);
    }
    out
}

/// Max deviation of the macro stepper from the scalar reference for one mode
/// and spatially constant data on a periodic grid, relative to max |alpha|.
pub fn single_mode_deviation() -> f64 {
    let mu = 2.7;
    let hbar = [0.1, -0.2, 0.45];
    let c = 0.35;
    let modal = ModalData::single(mu, hbar, c, XI);
    let mstar = 1.1;
    let cstar = 0.6;
    let v0 = [0.2, 0.5, -0.7];
    let f = [0.3, 0.1, 0.9];
    let mut co = coeffs(modal, mstar, cstar, [0.0; 3], DIAG);
    co.mustar = [0.1, 0.0, 0.8];
    let fxi: f64 = (0..3).map(|i| co.mustar[i] * f[i]).sum();
    let data = scenario(
        ["0"; 3],
        [&v0[0].to_string(), &v0[1].to_string(), &v0[2].to_string()],
        [&f[0].to_string(), &f[1].to_string(), &f[2].to_string()],
    );
    let grid = MacroGrid::periodic(3).unwrap();
    let dt = 1e-3;
    let t_end = 3.0;
    let mut series = Vec::new();
    let mut solver = MacroSolver::new(grid, co, &data, dt).unwrap();
    solver
        .run(t_end, |s| {
            series.push(s.state().alpha[0]);
            Ok(())
        })
        .unwrap();
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let refs = scalar_reference(
        mu,
        hbar[2],
        dot(hbar, v0),
        dot(hbar, f),
        c,
        mstar,
        cstar,
        fxi,
        t_end,
        30000,
    );
    let scale = refs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut err: f64 = 0.0;
    for (k, a) in series.iter().enumerate() {
        err = err.max((a - refs[k * 10]).abs());
    }
    err / scale
}
