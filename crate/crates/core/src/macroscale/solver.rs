use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::InitialData;
use super::forcing::MemoryForce;
use super::grid::MacroGrid;
use crate::correctors::HomogenizedCoefficients;
use crate::error::{Error, Result};
use crate::kernel::ModalData;
use crate::linalg::{dot3, max_abs};
use crate::perfem::ElasticTensor;

/// Growth of max |alpha| beyond this factor of its early size aborts the run.
pub const GROWTH_LIMIT: f64 = 1e6;

/// Coefficients of the limit equation as used by the stepper.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MacroCoefficients {
    pub mstar: f64,
    pub cstar: f64,
    pub lambdastar: [f64; 3],
    pub mustar: [f64; 3],
    pub a1star: [[f64; 6]; 6],
    pub a1dir: [[f64; 3]; 3],
    pub matrix_volume: f64,
    pub inclusion_volume: f64,
    /// int_{Y2} b-hat
    pub bhat_integral: [f64; 3],
    /// b = gamma xi with gamma = 0 on Y1 (b-hat = xi).
    pub example_case: bool,
    pub modal: ModalData,
}

impl MacroCoefficients {
    pub fn new(h: &HomogenizedCoefficients, modal: ModalData, example_case: bool) -> Self {
        let bhat_integral = std::array::from_fn(|i| h.mustar[i] - h.matrix_volume * h.xi[i]);
        MacroCoefficients {
            mstar: h.big_mstar,
            cstar: h.cstar,
            lambdastar: h.lambdastar,
            mustar: h.mustar,
            a1star: h.a1star,
            a1dir: h.a1dir,
            matrix_volume: h.matrix_volume,
            inclusion_volume: h.inclusion_volume,
            bhat_integral,
            example_case,
            modal,
        }
    }

    pub fn xi(&self) -> [f64; 3] {
        self.modal.xi
    }

    /// M* - sum a_i, the mass seen by the fastest components.
    pub fn effective_mass(&self) -> f64 {
        self.mstar - (0..self.modal.len()).map(|i| self.modal.weight(i)).sum::<f64>()
    }

    /// Gershgorin bound of the discrete operator alpha -> -L alpha + c* alpha.
    pub fn spectral_bound(&self, h: f64) -> f64 {
        let d = &self.a1dir;
        let mut rho = 4.0 * (d[0][0] + d[1][1] + d[2][2]) / (h * h);
        rho += 2.0 * (d[0][1].abs() + d[0][2].abs() + d[1][2].abs()) / (h * h);
        rho + self.cstar.abs()
    }

    pub fn stable_dt(&self, h: f64) -> f64 {
        2.0 * (self.effective_mass() / self.spectral_bound(h)).sqrt()
    }
}

/// alpha with its memory registers.
#[derive(Debug, Clone)]
pub struct MacroState {
    pub alpha: Vec<f64>,
    pub alpha_prev: Vec<f64>,
    /// r_i = int_0^t cos(mu_i (t-s)) d_s alpha ds, node-major.
    pub r: Vec<f64>,
    /// z_i = int_0^t sin(mu_i (t-s)) d_s alpha ds, node-major.
    pub z: Vec<f64>,
    pub step: usize,
}

/// Weak limits at one time.
#[derive(Debug, Clone)]
pub struct MacroLimits {
    pub t: f64,
    /// u1 = u0 + alpha xi
    pub u1: Vec<[f64; 3]>,
    /// int_{Y2} u2 dy
    pub u2_avg: Vec<[f64; 3]>,
    /// u-bar . xi, only for b = gamma xi with b-hat = xi.
    pub ubar_xi: Option<Vec<f64>>,
    /// A1dir grad alpha
    pub sigma: Vec<[f64; 3]>,
}

impl MacroLimits {
    /// |Y1| u1 at node p.
    pub fn hard_phase(&self, p: usize, y1: f64) -> [f64; 3] {
        self.u1[p].map(|v| y1 * v)
    }

    /// |Y2| u1 + int u2 at node p.
    pub fn soft_phase(&self, p: usize, y2: f64) -> [f64; 3] {
        std::array::from_fn(|d| y2 * self.u1[p][d] + self.u2_avg[p][d])
    }
}

/// One row of the macro time series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MacroRecord {
    pub t: f64,
    pub mean_alpha: f64,
    pub mean_ubar_xi: Option<f64>,
    pub max_alpha: f64,
}

pub struct MacroSolver {
    grid: MacroGrid,
    coeffs: MacroCoefficients,
    data: InitialData,
    force: MemoryForce,
    dt: f64,
    state: MacroState,
    w: Vec<f64>,
    w_prev: Vec<f64>,
    /// a_i, kappa_i = c_i (hbar_i.xi), q_i, cos, sin per mode.
    a: Vec<f64>,
    kappa: Vec<f64>,
    q: Vec<f64>,
    cs: Vec<(f64, f64)>,
    zq: Vec<f64>,
    lead: f64,
    u0_xi: Vec<f64>,
    early_scale: f64,
}

impl MacroSolver {
    pub fn new(grid: MacroGrid, coeffs: MacroCoefficients, data: &InitialData, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("macro dt must be positive, got {dt}")));
        }
        if coeffs.mstar <= 0.0 || coeffs.effective_mass() <= 0.0 {
            return Err(Error::Numerical(format!(
                "nonpositive effective mass: M* = {}, M* - sum a_i = {}",
                coeffs.mstar,
                coeffs.effective_mass()
            )));
        }
        let stable = coeffs.stable_dt(grid.h());
        if dt > stable {
            return Err(Error::Cfl { dt, stable });
        }
        let a1star = ElasticTensor::from_voigt(coeffs.a1star)?;
        let force = MemoryForce::new(grid, data, &coeffs.modal, &a1star, coeffs.mustar, dt)?;
        let modal = &coeffs.modal;
        let m = modal.len();
        let a: Vec<f64> = (0..m).map(|i| modal.weight(i)).collect();
        let kappa = (0..m).map(|i| modal.coupling[i] * modal.hxi(i)).collect();
        let mut q = Vec::with_capacity(m);
        let mut cs = Vec::with_capacity(m);
        let mut zq = Vec::with_capacity(m);
        for &mu in &modal.mu {
            let th = mu * dt;
            let (s, c) = th.sin_cos();
            q.push(s / th);
            zq.push((1.0 - c) / th);
            cs.push((c, s));
        }
        let lead = coeffs.mstar - a.iter().zip(&q).map(|(a, q)| a * q).sum::<f64>();
        let n = grid.len();
        let xi = modal.xi;
        let u0_xi = (0..n)
            .into_par_iter()
            .map(|p| {
                if grid.is_fixed(p) {
                    0.0
                } else {
                    dot3(data.u0(grid.position(p)), xi)
                }
            })
            .collect();
        Ok(MacroSolver {
            grid,
            data: data.clone(),
            force,
            dt,
            state: MacroState {
                alpha: vec![0.0; n],
                alpha_prev: vec![0.0; n],
                r: vec![0.0; n * m],
                z: vec![0.0; n * m],
                step: 0,
            },
            w: vec![0.0; n],
            w_prev: vec![0.0; n],
            a,
            kappa,
            q,
            cs,
            zq,
            lead,
            u0_xi,
            early_scale: 0.0,
            coeffs,
        })
    }

    pub fn grid(&self) -> &MacroGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &MacroCoefficients {
        &self.coeffs
    }

    pub fn state(&self) -> &MacroState {
        &self.state
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.state.step as f64 * self.dt
    }

    pub fn force(&self) -> &MemoryForce {
        &self.force
    }

    /// div(A1dir grad u) by centred differences, zero on fixed nodes.
    pub fn spatial_operator(&self, u: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let d = &self.coeffs.a1dir;
        let h2 = g.h() * g.h();
        (0..g.len())
            .into_par_iter()
            .map(|p| {
                if g.is_fixed(p) {
                    return 0.0;
                }
                let mut v = 0.0;
                for a in 0..3 {
                    let mut e = [0isize; 3];
                    e[a] = 1;
                    let plus = u[g.shift(p, e)];
                    e[a] = -1;
                    let minus = u[g.shift(p, e)];
                    v += d[a][a] * (plus - 2.0 * u[p] + minus) / h2;
                    for b in a + 1..3 {
                        if d[a][b] == 0.0 {
                            continue;
                        }
                        let mut o = [0isize; 3];
                        let mut s = 0.0;
                        for (sa, sb, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                            o[a] = sa;
                            o[b] = sb;
                            s += sign * u[g.shift(p, o)];
                        }
                        v += 2.0 * d[a][b] * s / (4.0 * h2);
                    }
                }
                v
            })
            .collect()
    }

    /// lambda* . grad v by centred differences.
    fn drift(&self, v: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let l = self.coeffs.lambdastar;
        let h = g.h();
        (0..g.len())
            .into_par_iter()
            .map(|p| {
                if g.is_fixed(p) {
                    return 0.0;
                }
                let mut s = 0.0;
                for a in 0..3 {
                    if l[a] == 0.0 {
                        continue;
                    }
                    let mut e = [0isize; 3];
                    e[a] = 1;
                    let plus = v[g.shift(p, e)];
                    e[a] = -1;
                    let minus = v[g.shift(p, e)];
                    s += l[a] * (plus - minus) / (2.0 * h);
                }
                s
            })
            .collect()
    }

    /// Everything on the right of w'' except the drift, at the current level.
    fn acceleration(&self) -> Vec<f64> {
        let rhs = self.force.rhs();
        let lap = self.spatial_operator(&self.state.alpha);
        let m = self.a.len();
        let cstar = self.coeffs.cstar;
        let st = &self.state;
        (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                if self.grid.is_fixed(p) {
                    return 0.0;
                }
                let mut e = rhs[p] + lap[p] - cstar * st.alpha[p];
                for i in 0..m {
                    e += self.kappa[i] * st.r[p * m + i];
                }
                e
            })
            .collect()
    }

    /// alpha at the next level from the next bracket value.
    fn resolve(&self, w_next: &[f64]) -> Vec<f64> {
        let m = self.a.len();
        let st = &self.state;
        (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                if self.grid.is_fixed(p) {
                    return 0.0;
                }
                let mut v = w_next[p];
                for i in 0..m {
                    let (c, s) = self.cs[i];
                    let pr = c * st.r[p * m + i] - s * st.z[p * m + i];
                    v += self.a[i] * (pr - self.q[i] * st.alpha[p]);
                }
                v / self.lead
            })
            .collect()
    }

    fn bracket_update(&self, e: &[f64], drift: Option<&[f64]>) -> Vec<f64> {
        let dt2 = self.dt * self.dt;
        (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                let mut acc = e[p];
                if let Some(d) = drift {
                    acc -= d[p];
                }
                if self.state.step == 0 {
                    0.5 * dt2 * acc
                } else {
                    2.0 * self.w[p] - self.w_prev[p] + dt2 * acc
                }
            })
            .collect()
    }

    /// Advances alpha and the registers by one step.
    pub fn step(&mut self) -> Result<()> {
        let e = self.acceleration();
        let has_drift = self.coeffs.lambdastar.iter().any(|&l| l != 0.0);
        let (w_next, alpha_next) = if !has_drift || self.state.step == 0 {
            let w = self.bracket_update(&e, None);
            let a = self.resolve(&w);
            (w, a)
        } else {
            let inv = 1.0 / self.dt;
            let st = &self.state;
            let v: Vec<f64> = st
                .alpha
                .iter()
                .zip(&st.alpha_prev)
                .map(|(a, b)| (a - b) * inv)
                .collect();
            let w_pred = self.bracket_update(&e, Some(&self.drift(&v)));
            let a_pred = self.resolve(&w_pred);
            let v: Vec<f64> = a_pred
                .iter()
                .zip(&st.alpha_prev)
                .map(|(a, b)| 0.5 * (a - b) * inv)
                .collect();
            let w = self.bracket_update(&e, Some(&self.drift(&v)));
            let a = self.resolve(&w);
            (w, a)
        };
        let m = self.a.len();
        if m > 0 {
            let alpha = &self.state.alpha;
            let (q, zq, cs) = (&self.q, &self.zq, &self.cs);
            self.state
                .r
                .par_chunks_mut(m)
                .zip(self.state.z.par_chunks_mut(m))
                .enumerate()
                .for_each(|(p, (r, z))| {
                    let da = alpha_next[p] - alpha[p];
                    for i in 0..m {
                        let (c, s) = cs[i];
                        let rn = c * r[i] - s * z[i] + q[i] * da;
                        let zn = s * r[i] + c * z[i] + zq[i] * da;
                        r[i] = rn;
                        z[i] = zn;
                    }
                });
        }
        self.w_prev = std::mem::replace(&mut self.w, w_next);
        self.state.alpha_prev = std::mem::replace(&mut self.state.alpha, alpha_next);
        self.state.step += 1;
        self.force.advance();

        let amax = max_abs(&self.state.alpha);
        if !amax.is_finite() {
            return Err(Error::Numerical(format!(
                "alpha is not finite at step {}",
                self.state.step
            )));
        }
        if self.state.step <= 10 {
            self.early_scale = self.early_scale.max(amax);
        } else if self.early_scale > 0.0 && amax > GROWTH_LIMIT * self.early_scale {
            return Err(Error::Numerical(format!(
                "macro instability: max |alpha| = {amax:e} at t = {}, early scale {:e}",
                self.time(),
                self.early_scale
            )));
        }
        Ok(())
    }

    pub fn record(&self) -> MacroRecord {
        let ubar = self.ubar_xi();
        MacroRecord {
            t: self.time(),
            mean_alpha: self.grid.integral(&self.state.alpha),
            mean_ubar_xi: ubar.as_ref().map(|u| self.grid.integral(u)),
            max_alpha: max_abs(&self.state.alpha),
        }
    }

    /// u-bar . xi = u0.xi + alpha - sum a_i r_i
    ///            + sum (hbar_i.xi) [sin(mu_i t)/mu_i (hbar_i.v0) + G_i],
    /// available only when b-hat = xi.
    pub fn ubar_xi(&self) -> Option<Vec<f64>> {
        if !self.coeffs.example_case {
            return None;
        }
        let m = self.a.len();
        let modal = &self.coeffs.modal;
        let t = self.time();
        let s: Vec<f64> = modal.mu.iter().map(|mu| (mu * t).sin() / mu).collect();
        let st = &self.state;
        Some(
            (0..self.grid.len())
                .into_par_iter()
                .map(|p| {
                    if self.grid.is_fixed(p) {
                        return 0.0;
                    }
                    let mut v = self.u0_xi[p] + st.alpha[p];
                    for i in 0..m {
                        v -= self.a[i] * st.r[p * m + i];
                        v += modal.hxi(i) * (s[i] * self.force.hv(p, i) + self.force.g(p, i));
                    }
                    v
                })
                .collect(),
        )
    }

    /// A1dir grad alpha; one-sided differences on the boundary.
    pub fn sigma(&self) -> Vec<[f64; 3]> {
        let g = &self.grid;
        let d = self.coeffs.a1dir;
        let h = g.h();
        let alpha = &self.state.alpha;
        let last = g.per_axis() - 1;
        let periodic = g.boundary() == super::grid::MacroBoundary::Periodic;
        (0..g.len())
            .into_par_iter()
            .map(|p| {
                let c = g.ijk(p);
                let mut grad = [0.0; 3];
                for a in 0..3 {
                    let mut e = [0isize; 3];
                    let (lo, hi, span) = if periodic || (c[a] > 0 && c[a] < last) {
                        (-1, 1, 2.0)
                    } else if c[a] == 0 {
                        (0, 1, 1.0)
                    } else {
                        (-1, 0, 1.0)
                    };
                    e[a] = hi;
                    let up = alpha[g.shift(p, e)];
                    e[a] = lo;
                    let down = alpha[g.shift(p, e)];
                    grad[a] = (up - down) / (span * h);
                }
                std::array::from_fn(|i| (0..3).map(|k| d[i][k] * grad[k]).sum())
            })
            .collect()
    }

    /// Weak limits at the current time.
    pub fn limits(&self) -> MacroLimits {
        let g = &self.grid;
        let xi = self.coeffs.xi();
        let m = self.a.len();
        let modal = &self.coeffs.modal;
        let y2 = self.coeffs.inclusion_volume;
        let bi = self.coeffs.bhat_integral;
        // (I - b (x) b / |b|^2) xi integrated over Y2
        let transverse: [f64; 3] = std::array::from_fn(|d| y2 * xi[d] - bi[d]);
        let free = self.force.u2_free();
        let st = &self.state;
        let (u1, u2_avg): (Vec<[f64; 3]>, Vec<[f64; 3]>) = (0..g.len())
            .into_par_iter()
            .map(|p| {
                let u0 = if g.is_fixed(p) {
                    [0.0; 3]
                } else {
                    self.data.u0(g.position(p))
                };
                let al = st.alpha[p];
                let u1 = std::array::from_fn(|d| u0[d] + al * xi[d]);
                let mut u2 = free[p];
                for i in 0..m {
                    let c = modal.hxi(i) * st.r[p * m + i];
                    for d in 0..3 {
                        u2[d] -= c * modal.hbar[i][d];
                    }
                }
                for d in 0..3 {
                    u2[d] -= transverse[d] * al;
                }
                (u1, u2)
            })
            .unzip();
        MacroLimits {
            t: self.time(),
            u1,
            u2_avg,
            ubar_xi: self.ubar_xi(),
            sigma: self.sigma(),
        }
    }

    /// Runs to `t_end`, handing every level (including t = 0) to `visit`.
    pub fn run(&mut self, t_end: f64, mut visit: impl FnMut(&MacroSolver) -> Result<()>) -> Result<()> {
        let steps = (t_end / self.dt).round() as usize;
        if ((steps as f64) * self.dt - t_end).abs() > 1e-9 * t_end.max(self.dt) {
            return Err(Error::Config(format!(
                "t_end = {t_end} is not a multiple of dt = {}",
                self.dt
            )));
        }
        visit(self)?;
        while self.state.step < steps {
            self.step()?;
            visit(self)?;
        }
        Ok(())
    }
}

/// Residual of d_tt(u-bar . xi) - div(A1dir grad alpha) = f.xi + div(A1* e(u0) xi)
/// at the middle of three consecutive levels, by a second difference in time.
/// Returns max |residual| over the free nodes.
pub fn reduced_equation_residual(
    solver: &MacroSolver,
    ubar: [&[f64]; 3],
    alpha_mid: &[f64],
    f_mid: &[[f64; 3]],
) -> f64 {
    let g = solver.grid();
    let dt2 = solver.dt() * solver.dt();
    let lap = solver.spatial_operator(alpha_mid);
    let div = solver.force().div_term();
    let xi = solver.coeffs().xi();
    (0..g.len())
        .filter(|&p| !g.is_fixed(p))
        .map(|p| {
            let acc = (ubar[2][p] - 2.0 * ubar[1][p] + ubar[0][p]) / dt2;
            (acc - lap[p] - dot3(f_mid[p], xi) - div[p]).abs()
        })
        .fold(0.0, f64::max)
}
