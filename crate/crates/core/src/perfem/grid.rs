//! Matrix-free operators on uniform voxel grids.
//!
//! `apply` gathers, for every unknown node, the contributions of its (up to)
//! eight adjacent voxels. Each output entry is written by exactly one task, so
//! the result is independent of scheduling.

use rayon::prelude::*;

pub const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// n^3 voxels, n^3 nodes, indices wrap.
    Periodic,
    /// n^3 voxels, (n+1)^3 nodes, no wrap.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub nvox: usize,
    pub h: f64,
    pub topology: Topology,
}

impl VoxelGrid {
    pub fn periodic(n: usize) -> Self {
        VoxelGrid {
            nvox: n,
            h: 1.0 / n as f64,
            topology: Topology::Periodic,
        }
    }

    pub fn unit_box(n: usize) -> Self {
        VoxelGrid {
            nvox: n,
            h: 1.0 / n as f64,
            topology: Topology::Box,
        }
    }

    pub fn nodes_per_axis(&self) -> usize {
        match self.topology {
            Topology::Periodic => self.nvox,
            Topology::Box => self.nvox + 1,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_axis().pow(3)
    }

    pub fn num_voxels(&self) -> usize {
        self.nvox.pow(3)
    }

    pub fn node_ijk(&self, node: usize) -> [usize; 3] {
        let m = self.nodes_per_axis();
        [node / (m * m), (node / m) % m, node % m]
    }

    pub fn node_index(&self, c: [usize; 3]) -> usize {
        let m = self.nodes_per_axis();
        (c[0] * m + c[1]) * m + c[2]
    }

    pub fn node_position(&self, node: usize) -> [f64; 3] {
        self.node_ijk(node).map(|c| c as f64 * self.h)
    }

    pub fn voxel_ijk(&self, v: usize) -> [usize; 3] {
        let n = self.nvox;
        [v / (n * n), (v / n) % n, v % n]
    }

    pub fn voxel_index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.nvox + c[1]) * self.nvox + c[2]
    }

    /// Node at local corner a of voxel v.
    pub fn voxel_node(&self, v: usize, a: usize) -> usize {
        let c = self.voxel_ijk(v);
        let off = [a & 1, (a >> 1) & 1, (a >> 2) & 1];
        match self.topology {
            Topology::Periodic => {
                let n = self.nvox;
                self.node_index([(c[0] + off[0]) % n, (c[1] + off[1]) % n, (c[2] + off[2]) % n])
            }
            Topology::Box => self.node_index([c[0] + off[0], c[1] + off[1], c[2] + off[2]]),
        }
    }

    /// The voxel having `node` as local corner a, if it exists.
    pub fn node_voxel(&self, node: usize, a: usize) -> Option<usize> {
        let c = self.node_ijk(node);
        let off = [a & 1, (a >> 1) & 1, (a >> 2) & 1];
        let n = self.nvox;
        match self.topology {
            Topology::Periodic => Some(self.voxel_index([
                (c[0] + n - off[0]) % n,
                (c[1] + n - off[1]) % n,
                (c[2] + n - off[2]) % n,
            ])),
            Topology::Box => {
                let mut v = [0; 3];
                for d in 0..3 {
                    if c[d] < off[d] || c[d] - off[d] >= n {
                        return None;
                    }
                    v[d] = c[d] - off[d];
                }
                Some(self.voxel_index(v))
            }
        }
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        match self.topology {
            Topology::Periodic => false,
            Topology::Box => self.node_ijk(node).iter().any(|&c| c == 0 || c == self.nvox),
        }
    }
}

/// A symmetric linear operator on a flat coefficient vector.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;

    fn apply_new(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

/// Element-assembled operator with `dof` unknowns per active node.
#[derive(Debug, Clone)]
pub struct GridOperator {
    grid: VoxelGrid,
    dof: usize,
    mats: Vec<Vec<f64>>,
    voxel_mat: Vec<u32>,
    node_unknown: Vec<u32>,
    unknown_node: Vec<u32>,
    corners: Vec<[u32; 8]>,
}

impl GridOperator {
    /// `mats` are row-major (8 dof)^2 element matrices, `voxel_mat[v]` selects
    /// one of them or [`NONE`]; unknowns live on the nodes where `active` holds.
    pub fn new(
        grid: VoxelGrid,
        dof: usize,
        mats: Vec<Vec<f64>>,
        voxel_mat: Vec<u32>,
        active: impl Fn(usize) -> bool,
    ) -> Self {
        assert_eq!(voxel_mat.len(), grid.num_voxels());
        assert!(mats.iter().all(|m| m.len() == 64 * dof * dof));
        let mut node_unknown = vec![NONE; grid.num_nodes()];
        let mut unknown_node = Vec::new();
        for (node, slot) in node_unknown.iter_mut().enumerate() {
            if active(node) {
                *slot = unknown_node.len() as u32;
                unknown_node.push(node as u32);
            }
        }
        let corners = (0..grid.num_voxels())
            .map(|v| std::array::from_fn(|a| node_unknown[grid.voxel_node(v, a)]))
            .collect();
        GridOperator {
            grid,
            dof,
            mats,
            voxel_mat,
            node_unknown,
            unknown_node,
            corners,
        }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn num_unknown_nodes(&self) -> usize {
        self.unknown_node.len()
    }

    pub fn unknown_node(&self, u: usize) -> usize {
        self.unknown_node[u] as usize
    }

    pub fn node_unknown(&self, node: usize) -> Option<usize> {
        let u = self.node_unknown[node];
        (u != NONE).then_some(u as usize)
    }

    pub fn voxel_matrix(&self, v: usize) -> Option<&[f64]> {
        let m = self.voxel_mat[v];
        (m != NONE).then(|| self.mats[m as usize].as_slice())
    }

    /// Unknown indices of the corners of voxel v ([`NONE`] where inactive).
    pub fn corners(&self, v: usize) -> &[u32; 8] {
        &self.corners[v]
    }

    /// Element vector of x on voxel v (zeros at inactive corners).
    pub fn gather(&self, v: usize, x: &[f64], out: &mut [f64]) {
        let d = self.dof;
        for (a, &u) in self.corners[v].iter().enumerate() {
            for c in 0..d {
                out[a * d + c] = if u == NONE { 0.0 } else { x[u as usize * d + c] };
            }
        }
    }

    /// Sum over voxels of x_e^T K_e y_e.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.dof;
        let m = 8 * d;
        let partial: Vec<f64> = (0..self.grid.num_voxels())
            .into_par_iter()
            .with_min_len(512)
            .map(|v| {
                let Some(k) = self.voxel_matrix(v) else {
                    return 0.0;
                };
                let mut xe = vec![0.0; m];
                let mut ye = vec![0.0; m];
                self.gather(v, x, &mut xe);
                self.gather(v, y, &mut ye);
                let mut s = 0.0;
                for i in 0..m {
                    let row = &k[i * m..(i + 1) * m];
                    s += xe[i] * row.iter().zip(&ye).map(|(a, b)| a * b).sum::<f64>();
                }
                s
            })
            .collect();
        partial.chunks(4096).map(|c| c.iter().sum::<f64>()).sum()
    }
}

impl LinearOperator for GridOperator {
    fn dim(&self) -> usize {
        self.unknown_node.len() * self.dof
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        let d = self.dof;
        let m = 8 * d;
        const BLOCK: usize = 64;
        y.par_chunks_mut(BLOCK * d).enumerate().for_each(|(blk, ys)| {
            let mut xe = [0.0f64; 24];
            for (off, yu) in ys.chunks_mut(d).enumerate() {
                let node = self.unknown_node[blk * BLOCK + off] as usize;
                yu.fill(0.0);
                for a in 0..8 {
                    let Some(v) = self.grid.node_voxel(node, a) else {
                        continue;
                    };
                    let mi = self.voxel_mat[v];
                    if mi == NONE {
                        continue;
                    }
                    let k = &self.mats[mi as usize];
                    self.gather(v, x, &mut xe[..m]);
                    for c in 0..d {
                        let row = &k[(a * d + c) * m..(a * d + c + 1) * m];
                        yu[c] += row.iter().zip(&xe[..m]).map(|(p, q)| p * q).sum::<f64>();
                    }
                }
            }
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let d = self.dof;
        let m = 8 * d;
        let mut diag = vec![0.0; self.dim()];
        diag.par_chunks_mut(d).enumerate().for_each(|(u, du)| {
            let node = self.unknown_node[u] as usize;
            for a in 0..8 {
                let Some(v) = self.grid.node_voxel(node, a) else {
                    continue;
                };
                let mi = self.voxel_mat[v];
                if mi == NONE {
                    continue;
                }
                let k = &self.mats[mi as usize];
                for c in 0..d {
                    du[c] += k[(a * d + c) * m + a * d + c];
                }
            }
        });
        diag
    }
}
