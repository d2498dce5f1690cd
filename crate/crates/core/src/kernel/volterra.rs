//! Second-kind Volterra equation of the memory bracket,
//!   c alpha(t) - int_0^t K'(t-s) alpha(s) ds = g(t),  c = m - K(0),
//! which is m alpha - int_0^t K(t-s) alpha'(s) ds = g integrated by parts
//! under alpha(0) = 0. Product trapezoidal rule on a uniform grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryKernel {
    pub mass: f64,
    pub k0: f64,
    /// K'(t_k)
    pub dk: Vec<f64>,
    pub dt: f64,
}

impl MemoryKernel {
    pub fn new(mass: f64, k0: f64, dk: Vec<f64>, dt: f64) -> Self {
        MemoryKernel { mass, k0, dk, dt }
    }

    /// Kernel from closed forms on n grid points.
    pub fn from_fn(mass: f64, k: impl Fn(f64) -> f64, dk: impl Fn(f64) -> f64, dt: f64, n: usize) -> Self {
        MemoryKernel {
            mass,
            k0: k(0.0),
            dk: (0..n).map(|i| dk(i as f64 * dt)).collect(),
            dt,
        }
    }

    pub fn lead(&self) -> f64 {
        self.mass - self.k0
    }

    fn check(&self, n: usize) -> Result<()> {
        if !(self.lead() > 0.0) {
            return Err(Error::Numerical(format!(
                "second-kind coefficient {} is not positive",
                self.lead()
            )));
        }
        if self.dk.len() < n {
            return Err(Error::Config(format!(
                "kernel has {} samples but {n} are needed",
                self.dk.len()
            )));
        }
        Ok(())
    }

    fn history(&self, alpha: &[f64], n: usize) -> f64 {
        let mut s = 0.5 * self.dk[n] * alpha[0];
        for j in 1..n {
            s += self.dk[n - j] * alpha[j];
        }
        self.dt * s
    }
}

/// Applies the discrete Volterra operator to alpha.
pub fn volterra_forward(kernel: &MemoryKernel, alpha: &[f64]) -> Result<Vec<f64>> {
    kernel.check(alpha.len())?;
    let c = kernel.lead();
    Ok((0..alpha.len())
        .map(|n| {
            if n == 0 {
                c * alpha[0]
            } else {
                (c - 0.5 * kernel.dt * kernel.dk[0]) * alpha[n] - kernel.history(alpha, n)
            }
        })
        .collect())
}

/// Solves for alpha by marching; one scalar division per step.
pub fn volterra_resolve(kernel: &MemoryKernel, g: &[f64]) -> Result<Vec<f64>> {
    kernel.check(g.len())?;
    let c = kernel.lead();
    let diag = c - 0.5 * kernel.dt * kernel.dk[0];
    let mut alpha = vec![0.0; g.len()];
    if g.is_empty() {
        return Ok(alpha);
    }
    alpha[0] = g[0] / c;
    for n in 1..g.len() {
        alpha[n] = (g[n] + kernel.history(&alpha, n)) / diag;
    }
    Ok(alpha)
}

/// Discrete resolvent: for g with g(0) = 0,
///   alpha_n = sum_{j=1}^{n} L_{n-j} g_j.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventKernel {
    pub l: Vec<f64>,
    pub lead: f64,
    pub dt: f64,
}

/// Builds L from the response to a unit impulse at the first grid step; the
/// scheme is Toeplitz on the indices n >= 1, so the response is the kernel.
pub fn resolvent_kernel(kernel: &MemoryKernel, n: usize) -> Result<ResolventKernel> {
    kernel.check(n)?;
    let mut impulse = vec![0.0; n + 1];
    let l = if n == 0 {
        Vec::new()
    } else {
        impulse[1] = 1.0;
        let ext = MemoryKernel {
            dk: {
                let mut d = kernel.dk.clone();
                d.resize(n + 1, 0.0);
                d
            },
            ..kernel.clone()
        };
        let alpha = volterra_resolve(&ext, &impulse)?;
        alpha[1..n + 1].to_vec()
    };
    Ok(ResolventKernel {
        l,
        lead: kernel.lead(),
        dt: kernel.dt,
    })
}

impl ResolventKernel {
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut alpha = vec![0.0; g.len()];
        for n in 1..g.len() {
            let mut s = 0.0;
            for j in 1..=n {
                s += self.l[n - j] * g[j];
            }
            alpha[n] = s;
        }
        alpha
    }
}
