//! Memory force F and the body-force registers.
//!
//! With phi_i = hbar_i . f and G_i(t) = int_0^t sin(mu_i (t-s))/mu_i phi_i(s) ds,
//!
//!   F = sum_i [ (mu_i (hbar_i.xi) - c_i/mu_i) sin(mu_i t) (hbar_i . v0)
//!             - (hbar_i.xi) (phi_i - mu_i^2 G_i) - c_i G_i ]
//!       + div(A1* e(u0) xi).
//!
//! G_i is carried as Z_i = int_0^t exp(i mu_i (t-s)) phi_i(s) ds, advanced exactly
//! for f piecewise linear in time.

use rayon::prelude::*;

use super::data::InitialData;
use super::grid::MacroGrid;
use crate::error::Result;
use crate::kernel::ModalData;
use crate::linalg::dot3;
use crate::perfem::ElasticTensor;

pub struct MemoryForce {
    grid: MacroGrid,
    modal: ModalData,
    mustar: [f64; 3],
    /// (mu_i (hbar_i.xi) - c_i/mu_i)
    v0_gain: Vec<f64>,
    /// hbar_i . v0, node-major.
    hv: Vec<f64>,
    div: Vec<f64>,
    data: InitialData,
    /// f at the current time, when f is not identically zero.
    f_now: Option<Vec<[f64; 3]>>,
    /// Z_i, node-major, real and imaginary parts.
    z_re: Vec<f64>,
    z_im: Vec<f64>,
    /// E0 / dt weights of the piecewise-linear update, per mode.
    w_prev: Vec<(f64, f64)>,
    w_next: Vec<(f64, f64)>,
    rot: Vec<(f64, f64)>,
    step: usize,
    dt: f64,
}

fn eval_f(data: &InitialData, grid: &MacroGrid, t: f64) -> Vec<[f64; 3]> {
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            if grid.is_fixed(p) {
                [0.0; 3]
            } else {
                data.f(t, grid.position(p))
            }
        })
        .collect()
}

impl MemoryForce {
    pub fn new(
        grid: MacroGrid,
        data: &InitialData,
        modal: &ModalData,
        a1star: &ElasticTensor,
        mustar: [f64; 3],
        dt: f64,
    ) -> Result<Self> {
        let m = modal.len();
        let xi = modal.xi;
        let v0_gain = (0..m)
            .map(|i| modal.mu[i] * modal.hxi(i) - modal.coupling[i] / modal.mu[i])
            .collect();
        let v0_zero = data.v0_is_zero();
        let hv: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .flat_map_iter(|p| {
                let v = if v0_zero || grid.is_fixed(p) {
                    [0.0; 3]
                } else {
                    data.v0(grid.position(p))
                };
                modal.hbar.iter().map(move |h| dot3(*h, v)).collect::<Vec<_>>()
            })
            .collect();
        let div = (0..grid.len())
            .into_par_iter()
            .map(|p| {
                if grid.is_fixed(p) {
                    0.0
                } else {
                    data.div_term(a1star, xi, grid.position(p))
                }
            })
            .collect();
        let f_now = if data.f_is_zero() {
            None
        } else {
            Some(eval_f(data, &grid, 0.0))
        };
        let mut w_prev = Vec::with_capacity(m);
        let mut w_next = Vec::with_capacity(m);
        let mut rot = Vec::with_capacity(m);
        for &mu in &modal.mu {
            let (s, c) = (mu * dt).sin_cos();
            // E0 = (e^{i mu dt} - 1)/(i mu), E1 = dt e^{i mu dt}/(i mu) + (e^{i mu dt} - 1)/mu^2
            let e0 = (s / mu, (1.0 - c) / mu);
            let e1 = (dt * s / mu + (c - 1.0) / (mu * mu), -dt * c / mu + s / (mu * mu));
            w_prev.push((e1.0 / dt, e1.1 / dt));
            w_next.push((e0.0 - e1.0 / dt, e0.1 - e1.1 / dt));
            rot.push((c, s));
        }
        let nz = if f_now.is_some() { grid.len() * m } else { 0 };
        Ok(MemoryForce {
            grid,
            modal: modal.clone(),
            mustar,
            v0_gain,
            hv,
            div,
            data: data.clone(),
            f_now,
            z_re: vec![0.0; nz],
            z_im: vec![0.0; nz],
            w_prev,
            w_next,
            rot,
            step: 0,
            dt,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn modal(&self) -> &ModalData {
        &self.modal
    }

    /// div(A1* e(u0) xi) at the nodes.
    pub fn div_term(&self) -> &[f64] {
        &self.div
    }

    /// f at the nodes at the current time (zeros when f = 0).
    pub fn body_force(&self) -> Vec<[f64; 3]> {
        match &self.f_now {
            Some(f) => f.clone(),
            None => vec![[0.0; 3]; self.grid.len()],
        }
    }

    /// G_i at node p.
    pub fn g(&self, p: usize, i: usize) -> f64 {
        if self.f_now.is_none() {
            return 0.0;
        }
        self.z_im[p * self.modal.len() + i] / self.modal.mu[i]
    }

    /// hbar_i . v0 at node p.
    pub fn hv(&self, p: usize, i: usize) -> f64 {
        self.hv[p * self.modal.len() + i]
    }

    /// F at the current time.
    pub fn forcing(&self) -> Vec<f64> {
        self.assemble(false)
    }

    /// mu* . f + F at the current time.
    pub fn rhs(&self) -> Vec<f64> {
        self.assemble(true)
    }

    fn assemble(&self, with_f: bool) -> Vec<f64> {
        let m = self.modal.len();
        let t = self.time();
        let sines: Vec<f64> = self.modal.mu.iter().map(|mu| (mu * t).sin()).collect();
        (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                if self.grid.is_fixed(p) {
                    return 0.0;
                }
                let mut v = self.div[p];
                for i in 0..m {
                    v += self.v0_gain[i] * sines[i] * self.hv[p * m + i];
                }
                if let Some(f) = &self.f_now {
                    let fp = f[p];
                    if with_f {
                        v += dot3(self.mustar, fp);
                    }
                    for i in 0..m {
                        let mu = self.modal.mu[i];
                        let phi = dot3(self.modal.hbar[i], fp);
                        let g = self.z_im[p * m + i] / mu;
                        v -= self.modal.hxi(i) * (phi - mu * mu * g) + self.modal.coupling[i] * g;
                    }
                }
                v
            })
            .collect()
    }

    /// Free part of int_{Y2} u2: sum_i hbar_i [sin(mu_i t)/mu_i (hbar_i . v0) + G_i].
    pub fn u2_free(&self) -> Vec<[f64; 3]> {
        let m = self.modal.len();
        let t = self.time();
        let s: Vec<f64> = self.modal.mu.iter().map(|mu| (mu * t).sin() / mu).collect();
        (0..self.grid.len())
            .into_par_iter()
            .map(|p| {
                let mut u = [0.0; 3];
                for i in 0..m {
                    let c = s[i] * self.hv[p * m + i] + self.g(p, i);
                    for d in 0..3 {
                        u[d] += c * self.modal.hbar[i][d];
                    }
                }
                u
            })
            .collect()
    }

    /// Advances to the next time level.
    pub fn advance(&mut self) {
        let t_next = (self.step + 1) as f64 * self.dt;
        if let Some(f_old) = self.f_now.take() {
            let f_new = if self.data.f_is_static() {
                f_old.clone()
            } else {
                eval_f(&self.data, &self.grid, t_next)
            };
            let m = self.modal.len();
            let modal = &self.modal;
            let (wp, wn, rot) = (&self.w_prev, &self.w_next, &self.rot);
            self.z_re
                .par_chunks_mut(m.max(1))
                .zip(self.z_im.par_chunks_mut(m.max(1)))
                .enumerate()
                .for_each(|(p, (zr, zi))| {
                    for i in 0..m {
                        let a = dot3(modal.hbar[i], f_old[p]);
                        let b = dot3(modal.hbar[i], f_new[p]);
                        let (c, s) = rot[i];
                        let re = c * zr[i] - s * zi[i] + wp[i].0 * a + wn[i].0 * b;
                        let im = s * zr[i] + c * zi[i] + wp[i].1 * a + wn[i].1 * b;
                        zr[i] = re;
                        zi[i] = im;
                    }
                });
            self.f_now = Some(f_new);
        }
        self.step += 1;
    }
}

/// F at every time level of a grid t_k = k dt, k = 0..=steps.
pub fn assemble_forcing_f(
    grid: MacroGrid,
    data: &InitialData,
    modal: &ModalData,
    a1star: &ElasticTensor,
    dt: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut force = MemoryForce::new(grid, data, modal, a1star, [0.0; 3], dt)?;
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        out.push(force.forcing());
        if k < steps {
            force.advance();
        }
    }
    Ok(out)
}
