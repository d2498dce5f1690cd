//! Assembled forms on the unit cell: periodic elasticity on Y1 and the
//! constrained pair (S, M) on the inclusion.

use rayon::prelude::*;

use super::cg::ComponentMeanFree;
use super::element::{scalar_mass, strain_load, vector_stiffness};
use super::grid::{GridOperator, LinearOperator, VoxelGrid, NONE};
use super::tensor::ElasticTensor;
use crate::error::{Error, Result};
use crate::fingerprint::Hasher;
use crate::linalg::dot3;
use crate::unitcell::{CellGeometry, SampledField};

/// The operator psi -> int_{Y1} A1 e(.) : e(psi) on periodic vector fields.
#[derive(Debug, Clone)]
pub struct PeriodicElasticity {
    pub op: GridOperator,
    pub tensor: ElasticTensor,
    /// int_{Y1} N_a for every unknown node.
    pub weights: Vec<f64>,
    pub matrix_voxels: usize,
    pub geometry_fingerprint: String,
}

pub fn assemble_periodic_elasticity(a1: &ElasticTensor, geom: &CellGeometry) -> Result<PeriodicElasticity> {
    if geom.matrix_volume() == 0.0 {
        return Err(Error::Geometry("empty matrix phase".into()));
    }
    let grid = VoxelGrid::periodic(geom.n());
    let k = vector_stiffness(a1, grid.h);
    let voxel_mat = geom.mask().iter().map(|m| if *m { NONE } else { 0 }).collect();
    let op = GridOperator::new(grid, 3, vec![k], voxel_mat, |node| geom.node_phases(node).0);
    let w = geom.voxel_volume() / 8.0;
    let weights = (0..op.num_unknown_nodes())
        .map(|u| {
            let node = op.unknown_node(u);
            (0..8)
                .filter_map(|a| grid.node_voxel(node, a))
                .filter(|&v| !geom.is_inclusion(v))
                .count() as f64
                * w
        })
        .collect();
    Ok(PeriodicElasticity {
        op,
        tensor: *a1,
        weights,
        matrix_voxels: geom.num_voxels() - geom.inclusion_count(),
        geometry_fingerprint: geom.fingerprint().to_string(),
    })
}

impl PeriodicElasticity {
    pub fn projector(&self) -> ComponentMeanFree {
        ComponentMeanFree { dof: 3 }
    }

    /// Right-hand side -int_{Y1} A1 E : e(psi) for a constant strain E, with the
    /// norm of the unassembled element loads as a reference scale.
    pub fn strain_load(&self, strain: &[[f64; 3]; 3]) -> (Vec<f64>, f64) {
        let fe = strain_load(&self.tensor, strain, self.op.grid().h);
        let grid = *self.op.grid();
        let mut rhs = vec![0.0; self.op.dim()];
        rhs.par_chunks_mut(3).enumerate().for_each(|(u, ru)| {
            let node = self.op.unknown_node(u);
            for a in 0..8 {
                let v = grid.node_voxel(node, a).unwrap();
                if self.op.voxel_matrix(v).is_some() {
                    for i in 0..3 {
                        ru[i] -= fe[3 * a + i];
                    }
                }
            }
        });
        let fe_norm = fe.iter().map(|x| x * x).sum::<f64>().sqrt();
        (rhs, fe_norm * (self.matrix_voxels as f64).sqrt())
    }

    /// Shift u so that int_{Y1} u = 0 componentwise.
    pub fn normalize_mean(&self, u: &mut [f64]) {
        let total: f64 = self.weights.iter().sum();
        for c in 0..3 {
            let mean: f64 = self
                .weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * u[3 * i + c])
                .sum::<f64>()
                / total;
            u.iter_mut().skip(c).step_by(3).for_each(|x| *x -= mean);
        }
    }

    /// int_{Y1} u per component.
    pub fn integral(&self, u: &[f64]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (i, w) in self.weights.iter().enumerate() {
            for c in 0..3 {
                s[c] += w * u[3 * i + c];
            }
        }
        s
    }

    /// Energy a(u, v) = int_{Y1} A1 e(u):e(v).
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.op.bilinear(u, v)
    }
}

/// The pencil (S, M) on V2 = {psi in H1_0(Y2): psi x b = 0}, parametrized by
/// psi = sum_a s_a d_a N_a with d_a the unit direction of b at node a.
#[derive(Debug, Clone)]
pub struct ConstrainedForms {
    pub s: GridOperator,
    pub m: GridOperator,
    /// Direction d_a for every unknown.
    pub dirs: Vec<[f64; 3]>,
    /// int_{Y2} N_a for every unknown.
    pub weights: Vec<f64>,
    pub tensor: ElasticTensor,
    k_elem: Vec<f64>,
    inclusion_voxels: Vec<usize>,
    node_bhat: Option<Vec<[f64; 3]>>,
    pub fingerprint: String,
}

pub fn assemble_constrained_forms(
    a2: &ElasticTensor,
    field: &SampledField,
    geom: &CellGeometry,
) -> Result<ConstrainedForms> {
    if geom.inclusion_count() == 0 {
        return Err(Error::Geometry("empty inclusion".into()));
    }
    if field.n() != geom.n() {
        return Err(Error::Field("field resolution does not match the geometry".into()));
    }
    let grid = VoxelGrid::periodic(geom.n());
    let k = vector_stiffness(a2, grid.h);
    let me = scalar_mass(grid.h);
    let inclusion_voxels: Vec<usize> = (0..geom.num_voxels()).filter(|&v| geom.is_inclusion(v)).collect();
    for &v in &inclusion_voxels {
        for a in 0..8 {
            if field.node_dir[grid.voxel_node(v, a)] == [0.0; 3] {
                return Err(Error::Field(format!("direction of b undefined on inclusion voxel {v}")));
            }
        }
    }
    let element = |v: usize| -> (Vec<f64>, Vec<f64>) {
        let d: [[f64; 3]; 8] = std::array::from_fn(|a| field.node_dir[grid.voxel_node(v, a)]);
        let mut se = vec![0.0; 64];
        let mut mse = vec![0.0; 64];
        for a in 0..8 {
            for b in 0..8 {
                let mut s = 0.0;
                for i in 0..3 {
                    for kk in 0..3 {
                        s += d[a][i] * k[(3 * a + i) * 24 + 3 * b + kk] * d[b][kk];
                    }
                }
                se[a * 8 + b] = s;
                mse[a * 8 + b] = me[a * 8 + b] * dot3(d[a], d[b]);
            }
        }
        (se, mse)
    };
    let (smats, mmats, voxel_mat): (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<u32>) = if field.fixed_direction {
        let (se, mse) = element(inclusion_voxels[0]);
        let vm = geom.mask().iter().map(|m| if *m { 0 } else { NONE }).collect();
        (vec![se], vec![mse], vm)
    } else {
        let mut vm = vec![NONE; geom.num_voxels()];
        for (i, &v) in inclusion_voxels.iter().enumerate() {
            vm[v] = i as u32;
        }
        let pairs: Vec<_> = inclusion_voxels.par_iter().map(|&v| element(v)).collect();
        let (s, m) = pairs.into_iter().unzip();
        (s, m, vm)
    };
    let interior = |node: usize| geom.node_phases(node) == (false, true);
    let s = GridOperator::new(grid, 1, smats, voxel_mat.clone(), interior);
    let m = GridOperator::new(grid, 1, mmats, voxel_mat, interior);
    if s.dim() == 0 {
        return Err(Error::Geometry("inclusion has no interior nodes".into()));
    }
    let dirs = (0..s.num_unknown_nodes())
        .map(|u| field.node_dir[s.unknown_node(u)])
        .collect();
    let weights = vec![geom.voxel_volume(); s.num_unknown_nodes()];
    let mut fp = Hasher::new("constrained-forms");
    fp.str(&field.fingerprint);
    for row in a2.voigt() {
        fp.f64s(row);
    }
    Ok(ConstrainedForms {
        s,
        m,
        dirs,
        weights,
        tensor: *a2,
        k_elem: k,
        inclusion_voxels,
        node_bhat: field.node_bhat.clone(),
        fingerprint: fp.finish(),
    })
}

impl ConstrainedForms {
    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    /// Nodal vector field psi = s d on all cell nodes (zero off the unknowns).
    pub fn embed(&self, s: &[f64]) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.s.grid().num_nodes()];
        for (u, (sv, d)) in s.iter().zip(&self.dirs).enumerate() {
            out[self.s.unknown_node(u)] = [sv * d[0], sv * d[1], sv * d[2]];
        }
        out
    }

    /// int_{Y2} s d, exact for the finite-element field.
    pub fn mean(&self, s: &[f64]) -> [f64; 3] {
        let mut h = [0.0; 3];
        for ((sv, d), w) in s.iter().zip(&self.dirs).zip(&self.weights) {
            for i in 0..3 {
                h[i] += w * sv * d[i];
            }
        }
        h
    }

    fn bhat_elem(&self, v: usize) -> Option<[f64; 24]> {
        let bh = self.node_bhat.as_ref()?;
        let g = self.s.grid();
        let b0 = bh[g.voxel_node(v, 0)];
        // Differences to corner 0; the stiffness annihilates constants, so a
        // constant b-hat contributes exactly zero.
        Some(std::array::from_fn(|k| bh[g.voxel_node(v, k / 3)][k % 3] - b0[k % 3]))
    }

    fn pair(&self, x: &[f64; 24], y: &[f64; 24]) -> f64 {
        let k = &self.k_elem;
        let mut s = 0.0;
        for i in 0..24 {
            if x[i] == 0.0 {
                continue;
            }
            let row = &k[i * 24..(i + 1) * 24];
            s += x[i] * row.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        }
        s
    }

    /// c = int_{Y2} A2 e(s d) : e(b-hat).
    pub fn coupling(&self, s: &[f64]) -> Option<f64> {
        self.node_bhat.as_ref()?;
        let partial: Vec<f64> = self
            .inclusion_voxels
            .par_iter()
            .with_min_len(256)
            .map(|&v| {
                let beta = self.bhat_elem(v).unwrap();
                let corners = self.s.corners(v);
                let psi: [f64; 24] = std::array::from_fn(|k| {
                    let u = corners[k / 3];
                    if u == NONE {
                        0.0
                    } else {
                        s[u as usize] * self.dirs[u as usize][k % 3]
                    }
                });
                self.pair(&psi, &beta)
            })
            .collect();
        Some(partial.chunks(4096).map(|c| c.iter().sum::<f64>()).sum())
    }

    /// c* = int_{Y2} A2 e(b-hat) : e(b-hat).
    pub fn bhat_energy(&self) -> Option<f64> {
        self.node_bhat.as_ref()?;
        let partial: Vec<f64> = self
            .inclusion_voxels
            .par_iter()
            .with_min_len(256)
            .map(|&v| {
                let beta = self.bhat_elem(v).unwrap();
                self.pair(&beta, &beta)
            })
            .collect();
        Some(partial.chunks(4096).map(|c| c.iter().sum::<f64>()).sum())
    }

    /// Quadrature of |e(s d)|^2 over Y2 (energy with the identity tensor).
    pub fn strain_norm_sq(&self, s: &[f64]) -> f64 {
        let id = vector_stiffness(&ElasticTensor::identity(), self.s.grid().h);
        let mut total = 0.0;
        for &v in &self.inclusion_voxels {
            let corners = self.s.corners(v);
            let psi: Vec<f64> = (0..24)
                .map(|k| {
                    let u = corners[k / 3];
                    if u == NONE {
                        0.0
                    } else {
                        s[u as usize] * self.dirs[u as usize][k % 3]
                    }
                })
                .collect();
            for i in 0..24 {
                for j in 0..24 {
                    total += psi[i] * id[i * 24 + j] * psi[j];
                }
            }
        }
        total
    }

    pub fn has_bhat(&self) -> bool {
        self.node_bhat.is_some()
    }

    pub fn s_energy(&self, s: &[f64]) -> f64 {
        crate::linalg::dot(s, &self.s.apply_new(s))
    }
}
