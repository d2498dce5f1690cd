use serde::{Deserialize, Serialize};

use super::grid::LinearOperator;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, xpby};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgOptions {
    #[serde(default = "default_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_maxiter")]
    pub cg_maxiter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_maxiter() -> usize {
    20_000
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            cg_tol: default_tol(),
            cg_maxiter: default_maxiter(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Euclidean projection onto the complement of an operator's null space.
pub trait Projector: Sync {
    fn project(&self, v: &mut [f64]);
}

/// Removes the per-component sum of a vector with `dof` interleaved components
/// (the translation modes of a periodic operator).
pub struct ComponentMeanFree {
    pub dof: usize,
}

impl Projector for ComponentMeanFree {
    fn project(&self, v: &mut [f64]) {
        let d = self.dof;
        let nodes = v.len() / d;
        for c in 0..d {
            let mean = v.iter().skip(c).step_by(d).sum::<f64>() / nodes as f64;
            v.iter_mut().skip(c).step_by(d).for_each(|x| *x -= mean);
        }
    }
}

/// Jacobi-preconditioned conjugate gradients with an optional null-space
/// projector. The inverse diagonal is computed once per solver.
pub struct Cg<'a> {
    op: &'a dyn LinearOperator,
    projector: Option<&'a dyn Projector>,
    inv_diag: Vec<f64>,
    opts: CgOptions,
}

impl<'a> Cg<'a> {
    pub fn new(op: &'a dyn LinearOperator, projector: Option<&'a dyn Projector>, opts: CgOptions) -> Self {
        let inv_diag = op
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Cg {
            op,
            projector,
            inv_diag,
            opts,
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, CgReport)> {
        self.solve_with_floor(rhs, 0.0)
    }

    /// As [`Cg::solve`], but a right-hand side whose norm after projection is
    /// below 1e-13 times `reference` is treated as exactly zero.
    pub fn solve_with_floor(&self, rhs: &[f64], reference: f64) -> Result<(Vec<f64>, CgReport)> {
        let n = self.op.dim();
        assert_eq!(rhs.len(), n);
        let mut b = rhs.to_vec();
        if let Some(p) = self.projector {
            p.project(&mut b);
        }
        let bnorm = norm(&b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 || bnorm <= 1e-13 * reference {
            return Ok((
                x,
                CgReport {
                    iterations: 0,
                    relative_residual: 0.0,
                },
            ));
        }
        let mut r = b;
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let mut rel = 1.0;
        for it in 1..=self.opts.cg_maxiter {
            self.op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Numerical(format!(
                    "operator is not positive definite on the search direction (p.Ap = {pap:e})"
                )));
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            if let Some(pr) = self.projector {
                pr.project(&mut r);
            }
            rel = norm(&r) / bnorm;
            if rel <= self.opts.cg_tol {
                if let Some(pr) = self.projector {
                    pr.project(&mut x);
                }
                return Ok((
                    x,
                    CgReport {
                        iterations: it,
                        relative_residual: rel,
                    },
                ));
            }
            z = self.precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            xpby(&z, beta, &mut p);
        }
        Err(Error::CgNotConverged {
            iterations: self.opts.cg_maxiter,
            residual: rel,
        })
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(a, b)| a * b).collect();
        if let Some(p) = self.projector {
            p.project(&mut z);
        }
        z
    }
}

/// One-shot convenience wrapper around [`Cg`].
pub fn cg_solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    projector: Option<&dyn Projector>,
    opts: &CgOptions,
) -> Result<(Vec<f64>, CgReport)> {
    Cg::new(op, projector, *opts).solve(rhs)
}
