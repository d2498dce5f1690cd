//! Memory kernel of the limit equation in contracted form.
//!
//! K-bar itself is never stored; only
//!   kbar1(t)   = sum_i cos(mu_i t) (hbar_i . xi)^2,
//!   kbarbar(t) = sum_i sin(mu_i t)/mu_i hbar_i (x) hbar_i,
//! the couplings c_i = int A2 e(h_i) : e(b-hat), and the modal data behind them.

mod volterra;
mod wave;

pub use volterra::{resolvent_kernel, volterra_forward, volterra_resolve, MemoryKernel, ResolventKernel};
pub use wave::{kernel_wave_oracle, kernel_wave_oracle_with_dt, wave_stable_dt, WaveKernel};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot3;
use crate::perfem::ConstrainedForms;
use crate::spectrum::ModeSet;

/// t_k = k dt for k = 0..=round(t_end/dt).
pub fn time_grid(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Config(format!("invalid time grid: t_end = {t_end}, dt = {dt}")));
    }
    let steps = (t_end / dt).round() as usize;
    if ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
        return Err(Error::Config(format!("t_end = {t_end} is not a multiple of dt = {dt}")));
    }
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

/// Modal data entering the limit equation, one entry per retained mode.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModalData {
    pub mu: Vec<f64>,
    pub hbar: Vec<[f64; 3]>,
    /// c_i = int A2 e(h_i) : e(b-hat)
    pub coupling: Vec<f64>,
    pub xi: [f64; 3],
}

impl ModalData {
    pub fn from_modes(modes: &ModeSet, coupling: Vec<f64>, xi: [f64; 3]) -> Result<Self> {
        if coupling.len() != modes.len() {
            return Err(Error::Config("one coupling coefficient per mode is required".into()));
        }
        Ok(ModalData {
            mu: modes.modes.iter().map(|m| m.mu).collect(),
            hbar: modes.modes.iter().map(|m| m.hbar).collect(),
            coupling,
            xi,
        })
    }

    /// Single synthetic mode.
    pub fn single(mu: f64, hbar: [f64; 3], coupling: f64, xi: [f64; 3]) -> Self {
        ModalData {
            mu: vec![mu],
            hbar: vec![hbar],
            coupling: vec![coupling],
            xi,
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        ModalData {
            mu: self.mu[..n].to_vec(),
            hbar: self.hbar[..n].to_vec(),
            coupling: self.coupling[..n].to_vec(),
            xi: self.xi,
        }
    }

    /// hbar_i . xi
    pub fn hxi(&self, i: usize) -> f64 {
        dot3(self.hbar[i], self.xi)
    }

    /// a_i = (hbar_i . xi)^2
    pub fn weight(&self, i: usize) -> f64 {
        self.hxi(i).powi(2)
    }

    pub fn kbar1(&self, t: f64) -> f64 {
        (0..self.len()).map(|i| (self.mu[i] * t).cos() * self.weight(i)).sum()
    }

    pub fn kbar1_derivative(&self, t: f64) -> f64 {
        (0..self.len())
            .map(|i| -self.mu[i] * (self.mu[i] * t).sin() * self.weight(i))
            .sum()
    }

    pub fn kbarbar(&self, t: f64) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for i in 0..self.len() {
            let s = (self.mu[i] * t).sin() / self.mu[i];
            let h = self.hbar[i];
            for a in 0..3 {
                for b in 0..3 {
                    k[a][b] += s * h[a] * h[b];
                }
            }
        }
        k
    }
}

/// c_i = int A2 e(h_i) : e(b-hat) for every mode.
pub fn mode_couplings(modes: &ModeSet, forms: &ConstrainedForms) -> Result<Vec<f64>> {
    if modes.fingerprint != forms.fingerprint {
        return Err(Error::Fingerprint {
            artifact: "modes".into(),
            expected: forms.fingerprint.clone(),
            found: modes.fingerprint.clone(),
        });
    }
    modes
        .modes
        .par_iter()
        .map(|m| {
            if m.s.len() != forms.dim() {
                return Err(Error::Missing(vec!["mode vectors".into()]));
            }
            forms
                .coupling(&m.s)
                .ok_or_else(|| Error::Unsupported("b-hat is undefined without a direction xi".into()))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelBundle {
    pub t: Vec<f64>,
    pub kbar1: Vec<f64>,
    pub kbarbar: Vec<[[f64; 3]; 3]>,
    pub modal: ModalData,
    pub fingerprint: String,
}

pub fn kernel_series(modal: &ModalData, t_grid: &[f64], fingerprint: &str) -> Result<KernelBundle> {
    if modal.is_empty() {
        return Err(Error::Config("kernel series needs at least one mode".into()));
    }
    let kbar1 = t_grid.par_iter().map(|&t| modal.kbar1(t)).collect();
    let kbarbar = t_grid.par_iter().map(|&t| modal.kbarbar(t)).collect();
    Ok(KernelBundle {
        t: t_grid.to_vec(),
        kbar1,
        kbarbar,
        modal: modal.clone(),
        fingerprint: fingerprint.to_string(),
    })
}

impl KernelBundle {
    pub fn dt(&self) -> f64 {
        if self.t.len() > 1 {
            self.t[1] - self.t[0]
        } else {
            0.0
        }
    }

    /// Memory kernel for the scalar Volterra equation with leading mass `mass`.
    pub fn memory_kernel(&self, mass: f64) -> MemoryKernel {
        let dk = self.t.iter().map(|&t| self.modal.kbar1_derivative(t)).collect();
        MemoryKernel::new(mass, self.kbar1[0], dk, self.dt())
    }
}
