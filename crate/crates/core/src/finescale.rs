//! Direct simulation of the epsilon-problem on the unit cube.
//!
//! Trilinear elements with lumped mass; the cell pattern is tiled 1/eps times per
//! axis and the soft phase carries eps^2 A2. Time stepping is Strang split:
//! half a Lorentz rotation, a kick-drift-kick leapfrog step, half a rotation.
//! The rotation is the exact flow of v' = -(1/eps) b x v, applied per node.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cross, dot, dot3, norm3};
use crate::macroscale::InitialData;
use crate::perfem::element::{max_eigenvalue, vector_stiffness};
use crate::perfem::{ElasticTensor, GridOperator, LinearOperator, VoxelGrid};
use crate::unitcell::{CellGeometry, SampledField};

/// Default fraction of the elastic stability bound.
pub const CFL_FRACTION: f64 = 0.9;

/// Material and field data of one epsilon.
pub struct FineCoefficients {
    pub eps: f64,
    /// Number of periods per axis, 1/eps.
    pub periods: usize,
    /// Fine voxels per period and axis.
    pub vox_per_cell: usize,
    /// Inclusion flag per fine voxel.
    pub inclusion: Vec<bool>,
    pub op: GridOperator,
    /// Lumped mass per unknown node.
    pub mass: Vec<f64>,
    /// b(x/eps) per unknown node, mass-weighted over adjacent voxels.
    pub node_b: Vec<[f64; 3]>,
    /// Stiffness of the hard and of the scaled soft element.
    pub hard_stiffness: ElasticTensor,
    pub soft_stiffness: ElasticTensor,
    pub stable_dt: f64,
}

/// Builds the tiled coefficients. The fine grid resolves each period with
/// `refine` voxels per cell voxel.
pub fn assemble_fine(
    geom: &CellGeometry,
    field: &SampledField,
    a1: &ElasticTensor,
    a2: &ElasticTensor,
    eps: f64,
    refine: usize,
) -> Result<FineCoefficients> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let inv = 1.0 / eps;
    let periods = inv.round() as usize;
    if periods == 0 || (inv - periods as f64).abs() > 1e-9 * inv {
        return Err(Error::Config(format!("1/eps must be an integer, got eps = {eps}")));
    }
    if refine == 0 {
        return Err(Error::Config("refinement factor must be at least 1".into()));
    }
    if field.n() != geom.n() {
        return Err(Error::Field("field and geometry resolutions differ".into()));
    }
    let nc = geom.n();
    let vpc = nc * refine;
    let grid = VoxelGrid::unit_box(periods * vpc);
    let h = grid.h;
    let cell_voxel = |v: usize| {
        let c = grid.voxel_ijk(v);
        geom.voxel_index((c[0] % vpc) / refine, (c[1] % vpc) / refine, (c[2] % vpc) / refine)
    };
    let inclusion: Vec<bool> = (0..grid.num_voxels())
        .map(|v| geom.is_inclusion(cell_voxel(v)))
        .collect();
    let soft = a2.scaled(eps * eps);
    let k_hard = vector_stiffness(a1, h);
    let k_soft = vector_stiffness(&soft, h);
    let lmax = max_eigenvalue(&k_hard, 24).max(max_eigenvalue(&k_soft, 24));
    let stable_dt = 2.0 / (lmax / (h * h * h / 8.0)).sqrt();
    let voxel_mat = inclusion.iter().map(|&s| s as u32).collect();
    let op = GridOperator::new(grid, 3, vec![k_hard, k_soft], voxel_mat, |node| {
        !grid.is_boundary_node(node)
    });
    let nu = op.num_unknown_nodes();
    let vol = h * h * h / 8.0;
    let (mass, node_b): (Vec<f64>, Vec<[f64; 3]>) = (0..nu)
        .into_par_iter()
        .map(|u| {
            let node = op.unknown_node(u);
            let mut m = 0.0;
            let mut b = [0.0; 3];
            for a in 0..8 {
                if let Some(v) = grid.node_voxel(node, a) {
                    m += vol;
                    let bv = field.voxel_b[cell_voxel(v)];
                    for d in 0..3 {
                        b[d] += vol * bv[d];
                    }
                }
            }
            (m, b.map(|x| x / m))
        })
        .unzip();
    Ok(FineCoefficients {
        eps,
        periods,
        vox_per_cell: vpc,
        inclusion,
        op,
        mass,
        node_b,
        hard_stiffness: a1.clone(),
        soft_stiffness: soft,
        stable_dt,
    })
}

impl FineCoefficients {
    pub fn grid(&self) -> &VoxelGrid {
        self.op.grid()
    }

    pub fn inclusion_fraction(&self) -> f64 {
        self.inclusion.iter().filter(|&&s| s).count() as f64 / self.inclusion.len() as f64
    }

    /// Number of connected inclusion components (face adjacency).
    pub fn inclusion_components(&self) -> usize {
        let g = *self.grid();
        let n = g.nvox;
        let mut seen = vec![false; self.inclusion.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.inclusion.len() {
            if !self.inclusion[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                let c = g.voxel_ijk(v);
                for d in 0..3 {
                    for s in [-1isize, 1] {
                        let x = c[d] as isize + s;
                        if x < 0 || x >= n as isize {
                            continue;
                        }
                        let mut cc = c;
                        cc[d] = x as usize;
                        let w = g.voxel_index(cc);
                        if self.inclusion[w] && !seen[w] {
                            seen[w] = true;
                            stack.push(w);
                        }
                    }
                }
            }
        }
        count
    }
}

/// Exact rotation of v about the axis b by the angle -|b| dt / eps, the flow of
/// v' = -(1/eps) b x v over dt.
pub fn lorentz_rotation(v: [f64; 3], b: [f64; 3], dt_over_eps: f64) -> [f64; 3] {
    let nb = norm3(b);
    if nb == 0.0 {
        return v;
    }
    let k = b.map(|x| x / nb);
    let (s, c) = (-nb * dt_over_eps).sin_cos();
    let kv = dot3(k, v);
    // split into the parallel part, kept as is, and the rotated normal part
    let par = k.map(|x| x * kv);
    let perp: [f64; 3] = std::array::from_fn(|d| v[d] - par[d]);
    let kxp = cross(k, perp);
    std::array::from_fn(|d| par[d] + c * perp[d] + s * kxp[d])
}

#[derive(Debug, Clone)]
pub struct FineState {
    /// Displacement at the unknown nodes, 3 per node.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    /// Kinetic + elastic energy.
    pub total: f64,
    pub kinetic: f64,
    /// Conserved quantity of the leapfrog step (total minus dt^2/8 |Ku - F|^2_{M^-1}).
    pub modified: f64,
    /// Work of f accumulated since t = 0.
    pub work: f64,
}

/// Phase averages of one time level.
#[derive(Debug, Clone)]
pub struct PhaseAverages {
    pub t: f64,
    /// Centres of the epsilon-cells, x-major.
    pub centers: Vec<[f64; 3]>,
    /// eps^-3 int over each cell of chi_i u, phase 1 (hard) and 2 (soft).
    pub hard: Vec<[f64; 3]>,
    pub soft: Vec<[f64; 3]>,
    /// int over the cube of chi_i u.
    pub hard_total: [f64; 3],
    pub soft_total: [f64; 3],
}

pub struct FineSolver<'a> {
    coeffs: &'a FineCoefficients,
    data: InitialData,
    dt: f64,
    state: FineState,
    ku: Vec<f64>,
    load: Vec<f64>,
    work: f64,
    f_zero: bool,
}

impl<'a> FineSolver<'a> {
    pub fn new(coeffs: &'a FineCoefficients, data: &InitialData, dt: f64) -> Result<Self> {
        let limit = CFL_FRACTION * coeffs.stable_dt;
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, stable: limit });
        }
        let op = &coeffs.op;
        let g = *op.grid();
        let nu = op.num_unknown_nodes();
        let mut u = vec![0.0; 3 * nu];
        let mut v = vec![0.0; 3 * nu];
        u.par_chunks_mut(3)
            .zip(v.par_chunks_mut(3))
            .enumerate()
            .for_each(|(k, (uk, vk))| {
                let x = g.node_position(op.unknown_node(k));
                uk.copy_from_slice(&data.u0(x));
                vk.copy_from_slice(&data.v0(x));
            });
        let ku = op.apply_new(&u);
        let mut s = FineSolver {
            coeffs,
            data: data.clone(),
            dt,
            state: FineState { u, v, step: 0 },
            ku,
            load: vec![],
            work: 0.0,
            f_zero: data.f_is_zero(),
        };
        s.load = s.load_at(0.0);
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.state.step as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &FineState {
        &self.state
    }

    pub fn coeffs(&self) -> &FineCoefficients {
        self.coeffs
    }

    /// Lumped load m_a f(t, x_a).
    fn load_at(&self, t: f64) -> Vec<f64> {
        let op = &self.coeffs.op;
        let nu = op.num_unknown_nodes();
        if self.f_zero {
            return vec![0.0; 3 * nu];
        }
        let g = *op.grid();
        let mut out = vec![0.0; 3 * nu];
        out.par_chunks_mut(3).enumerate().for_each(|(k, o)| {
            let f = self.data.f(t, g.node_position(op.unknown_node(k)));
            for d in 0..3 {
                o[d] = self.coeffs.mass[k] * f[d];
            }
        });
        out
    }

    fn rotate(&mut self, tau: f64) {
        let r = tau / self.coeffs.eps;
        let b = &self.coeffs.node_b;
        self.state.v.par_chunks_mut(3).enumerate().for_each(|(k, vk)| {
            let w = lorentz_rotation([vk[0], vk[1], vk[2]], b[k], r);
            vk.copy_from_slice(&w);
        });
    }

    fn kick(&mut self, tau: f64) {
        let m = &self.coeffs.mass;
        let (ku, load) = (&self.ku, &self.load);
        self.state.v.par_chunks_mut(3).enumerate().for_each(|(k, vk)| {
            for d in 0..3 {
                vk[d] += tau * (load[3 * k + d] - ku[3 * k + d]) / m[k];
            }
        });
    }

    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        self.rotate(0.5 * dt);
        self.kick(0.5 * dt);
        let load_old = std::mem::take(&mut self.load);
        let dtv = dt;
        self.state
            .u
            .par_iter_mut()
            .zip(&self.state.v)
            .for_each(|(u, v)| *u += dtv * v);
        let t_new = (self.state.step + 1) as f64 * dt;
        self.load = self.load_at(t_new);
        if !self.f_zero {
            let mid: Vec<f64> = load_old.iter().zip(&self.load).map(|(a, b)| 0.5 * (a + b)).collect();
            self.work += dt * dot(&self.state.v, &mid);
        }
        self.ku = self.coeffs.op.apply_new(&self.state.u);
        self.kick(0.5 * dt);
        self.rotate(0.5 * dt);
        self.state.step += 1;
        if self.state.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("fine velocity is not finite at t = {t_new}")));
        }
        Ok(())
    }

    pub fn energy(&self) -> EnergyReport {
        let m = &self.coeffs.mass;
        let v = &self.state.v;
        let kin: Vec<f64> = (0..m.len())
            .map(|k| 0.5 * m[k] * (v[3 * k].powi(2) + v[3 * k + 1].powi(2) + v[3 * k + 2].powi(2)))
            .collect();
        let kinetic = crate::linalg::sum(&kin);
        let elastic = 0.5 * dot(&self.state.u, &self.ku);
        let resid: Vec<f64> = (0..m.len())
            .map(|k| {
                (0..3)
                    .map(|d| (self.ku[3 * k + d] - self.load[3 * k + d]).powi(2))
                    .sum::<f64>()
                    / m[k]
            })
            .collect();
        let corr = self.dt * self.dt / 8.0 * crate::linalg::sum(&resid);
        EnergyReport {
            t: self.time(),
            total: kinetic + elastic,
            kinetic,
            modified: kinetic + elastic - corr,
            work: self.work,
        }
    }

    /// Cell averages of chi_i u over the epsilon-cells.
    pub fn phase_average(&self) -> PhaseAverages {
        let c = self.coeffs;
        let op = &c.op;
        let g = *op.grid();
        let p = c.periods;
        let vpc = c.vox_per_cell;
        let u = &self.state.u;
        let per_cell: Vec<([f64; 3], [f64; 3])> = (0..p * p * p)
            .into_par_iter()
            .map(|cell| {
                let cc = [cell / (p * p), (cell / p) % p, cell % p];
                let mut hard = [0.0; 3];
                let mut soft = [0.0; 3];
                for i in 0..vpc {
                    for j in 0..vpc {
                        for k in 0..vpc {
                            let v = g.voxel_index([cc[0] * vpc + i, cc[1] * vpc + j, cc[2] * vpc + k]);
                            let mut mean = [0.0; 3];
                            for &n in op.corners(v) {
                                if n != crate::perfem::grid::NONE {
                                    for d in 0..3 {
                                        mean[d] += u[3 * n as usize + d] / 8.0;
                                    }
                                }
                            }
                            let acc = if c.inclusion[v] { &mut soft } else { &mut hard };
                            for d in 0..3 {
                                acc[d] += mean[d];
                            }
                        }
                    }
                }
                let w = 1.0 / (vpc * vpc * vpc) as f64;
                (hard.map(|x| x * w), soft.map(|x| x * w))
            })
            .collect();
        let centers = (0..p * p * p)
            .map(|cell| {
                let cc = [cell / (p * p), (cell / p) % p, cell % p];
                cc.map(|x| (x as f64 + 0.5) * c.eps)
            })
            .collect();
        let vol = c.eps.powi(3);
        let mut hard_total = [0.0; 3];
        let mut soft_total = [0.0; 3];
        for (h, s) in &per_cell {
            for d in 0..3 {
                hard_total[d] += vol * h[d];
                soft_total[d] += vol * s[d];
            }
        }
        let (hard, soft) = per_cell.into_iter().unzip();
        PhaseAverages {
            t: self.time(),
            centers,
            hard,
            soft,
            hard_total,
            soft_total,
        }
    }
}

/// Space-time mean-square comparison of phase averages against targets.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ErrorAccumulator {
    sq_hard: f64,
    sq_soft: f64,
    ref_hard: f64,
    ref_soft: f64,
    samples: usize,
}

impl ErrorAccumulator {
    pub fn add(&mut self, avg: &PhaseAverages, hard: &[[f64; 3]], soft: &[[f64; 3]]) {
        let n = avg.hard.len() as f64;
        let sq = |a: &[[f64; 3]], b: &[[f64; 3]]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (0..3).map(|d| (x[d] - y[d]).powi(2)).sum::<f64>())
                .sum::<f64>()
                / n
        };
        let nrm = |a: &[[f64; 3]]| a.iter().map(|x| dot3(*x, *x)).sum::<f64>() / n;
        self.sq_hard += sq(&avg.hard, hard);
        self.sq_soft += sq(&avg.soft, soft);
        self.ref_hard += nrm(hard);
        self.ref_soft += nrm(soft);
        self.samples += 1;
    }

    /// Root of the space-time mean of |average - target|^2, hard then soft.
    pub fn rms(&self) -> (f64, f64) {
        let s = self.samples.max(1) as f64;
        ((self.sq_hard / s).sqrt(), (self.sq_soft / s).sqrt())
    }

    /// Same, divided by the root mean square of the targets.
    pub fn relative(&self) -> (f64, f64) {
        let (h, s) = self.rms();
        let rs = self.samples.max(1) as f64;
        let rh = (self.ref_hard / rs).sqrt();
        let rsf = (self.ref_soft / rs).sqrt();
        (if rh > 0.0 { h / rh } else { h }, if rsf > 0.0 { s / rsf } else { s })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

/// Largest dt <= CFL_FRACTION * stable that divides `interval`.
pub fn fitted_dt(interval: f64, stable: f64) -> f64 {
    let k = (interval / (CFL_FRACTION * stable)).ceil().max(1.0);
    interval / k
}
