//! Independent route to kbar1 for a constant direction xi in Y2:
//! k solves k_tt - div(A-hat grad k) = 0 in Y2, k = 0 on the boundary,
//! k(0) = 0, k_t(0) = 1, and kbar1(t) = int_{Y2} k_t(t).
//!
//! Explicit leapfrog with lumped mass. The integral is evaluated in flux
//! form, |Y2| + sum_a m_a (v_a(t) - 1), which accounts for the boundary
//! layer between the interior nodes and the boundary of Y2 and gives
//! kbar1(0) = |Y2| exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfem::element::{max_eigenvalue, scalar_stiffness};
use crate::perfem::grid::{GridOperator, LinearOperator, VoxelGrid, NONE};
use crate::perfem::ElasticTensor;
use crate::unitcell::CellGeometry;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveKernel {
    /// Samples on the requested grid.
    pub kbar1: Vec<f64>,
    /// Every leapfrog step.
    pub fine_t: Vec<f64>,
    pub fine_kbar1: Vec<f64>,
    pub dt: f64,
    pub stable_dt: f64,
}

fn wave_operator(a2: &ElasticTensor, geom: &CellGeometry, xi: [f64; 3]) -> (GridOperator, f64) {
    let grid = VoxelGrid::periodic(geom.n());
    let ahat = a2.directional(xi);
    let k = scalar_stiffness(&ahat, grid.h);
    let voxel_mat = geom.mask().iter().map(|m| if *m { 0 } else { NONE }).collect();
    let op = GridOperator::new(grid, 1, vec![k.to_vec()], voxel_mat, |node| {
        geom.node_phases(node) == (false, true)
    });
    let lmax = max_eigenvalue(&k, 8) / (geom.voxel_volume() / 8.0);
    (op, 2.0 / lmax.sqrt())
}

/// Largest stable leapfrog step for the lumped-mass wave operator.
pub fn wave_stable_dt(a2: &ElasticTensor, geom: &CellGeometry, xi: [f64; 3]) -> f64 {
    wave_operator(a2, geom, xi).1
}

/// Runs with a step of at most `cfl_fraction` times the stable step, chosen
/// to divide the spacing of `t_grid`.
pub fn kernel_wave_oracle(
    a2: &ElasticTensor,
    geom: &CellGeometry,
    xi: [f64; 3],
    t_grid: &[f64],
    cfl_fraction: f64,
) -> Result<WaveKernel> {
    let stable = wave_stable_dt(a2, geom, xi);
    let grid_dt = if t_grid.len() > 1 {
        t_grid[1] - t_grid[0]
    } else {
        stable
    };
    let sub = (grid_dt / (cfl_fraction * stable)).ceil().max(1.0);
    kernel_wave_oracle_with_dt(a2, geom, xi, t_grid, grid_dt / sub)
}

pub fn kernel_wave_oracle_with_dt(
    a2: &ElasticTensor,
    geom: &CellGeometry,
    xi: [f64; 3],
    t_grid: &[f64],
    dt: f64,
) -> Result<WaveKernel> {
    if geom.inclusion_count() == 0 {
        return Err(Error::Geometry("empty inclusion".into()));
    }
    let (op, stable) = wave_operator(a2, geom, xi);
    if dt > stable {
        return Err(Error::Cfl { dt, stable });
    }
    let grid_dt = if t_grid.len() > 1 { t_grid[1] - t_grid[0] } else { dt };
    let sub = (grid_dt / dt).round() as usize;
    if t_grid.len() > 1 && ((sub as f64) * dt - grid_dt).abs() > 1e-9 * grid_dt {
        return Err(Error::Config("wave step must divide the kernel grid spacing".into()));
    }
    let mass = geom.voxel_volume();
    let y2 = geom.inclusion_volume();
    let nu = op.dim();
    let mut k = vec![0.0; nu];
    let mut v_half = vec![1.0; nu];
    let mut kk = vec![0.0; nu];
    let steps = (t_grid.len().max(1) - 1) * sub;
    let mut fine_t = Vec::with_capacity(steps + 1);
    let mut fine = Vec::with_capacity(steps + 1);
    fine_t.push(0.0);
    fine.push(y2);
    for step in 1..=steps {
        for i in 0..nu {
            k[i] += dt * v_half[i];
        }
        op.apply(&k, &mut kk);
        // velocity at the full step is the mean of the two half steps
        let mut vsum = 0.0;
        for i in 0..nu {
            let v_new = v_half[i] - dt * kk[i] / mass;
            vsum += 0.5 * (v_half[i] + v_new) - 1.0;
            v_half[i] = v_new;
        }
        if !vsum.is_finite() {
            return Err(Error::Numerical("wave oracle produced a non-finite value".into()));
        }
        fine_t.push(step as f64 * dt);
        fine.push(y2 + mass * vsum);
    }
    let kbar1 = (0..t_grid.len()).map(|j| fine[j * sub]).collect();
    Ok(WaveKernel {
        kbar1,
        fine_t,
        fine_kbar1: fine,
        dt,
        stable_dt: stable,
    })
}
