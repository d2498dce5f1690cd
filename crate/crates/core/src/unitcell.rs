//! Voxelized unit cell Y = (0,1)^3 with one inclusion Y2, and the magnetic
//! field b sampled on it.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, CELL_VARS};
use crate::fingerprint::Hasher;
use crate::linalg::{dot3, norm3};
use crate::perfem::element::gauss_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Cube,
    Ball,
    /// No inclusion; used for patch tests.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub shape: ShapeKind,
    #[serde(default = "default_center")]
    pub center: [f64; 3],
    /// Side length for a cube, radius for a ball.
    #[serde(default)]
    pub size: f64,
    pub n: usize,
}

fn default_center() -> [f64; 3] {
    [0.5; 3]
}

#[derive(Debug, Clone)]
pub struct CellGeometry {
    n: usize,
    mask: Vec<bool>,
    config: GeometryConfig,
    fingerprint: String,
}

pub fn build_geometry(config: &GeometryConfig) -> Result<CellGeometry> {
    let n = config.n;
    if n < 8 {
        return Err(Error::Geometry(format!(
            "n = {n} but at least 8 voxels per axis are required"
        )));
    }
    let h = 1.0 / n as f64;
    let c = config.center;
    let half = match config.shape {
        ShapeKind::Cube => 0.5 * config.size,
        ShapeKind::Ball => config.size,
        ShapeKind::None => 0.0,
    };
    if config.shape != ShapeKind::None {
        if !(config.size > 0.0) {
            return Err(Error::Geometry("inclusion size must be positive".into()));
        }
        for d in 0..3 {
            let (lo, hi) = (c[d] - half, c[d] + half);
            if lo < h - 1e-12 || hi > 1.0 - h + 1e-12 {
                return Err(Error::Geometry(format!(
                    "inclusion touches the cell boundary along axis {} (extent [{lo}, {hi}], one-voxel margin {h})",
                    d + 1
                )));
            }
        }
    }
    let mut mask = vec![false; n * n * n];
    for (v, m) in mask.iter_mut().enumerate() {
        let (i, j, k) = (v / (n * n), (v / n) % n, v % n);
        let p = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
        *m = match config.shape {
            ShapeKind::Cube => (0..3).all(|d| (p[d] - c[d]).abs() < half),
            ShapeKind::Ball => (0..3).map(|d| (p[d] - c[d]).powi(2)).sum::<f64>() < half * half,
            ShapeKind::None => false,
        };
    }
    if config.shape != ShapeKind::None && !mask.iter().any(|m| *m) {
        return Err(Error::Geometry(
            "inclusion contains no voxel centre at this resolution".into(),
        ));
    }
    let mut fp = Hasher::new("geometry");
    fp.u64(n as u64).bools(&mask);
    let geom = CellGeometry {
        n,
        mask,
        config: config.clone(),
        fingerprint: fp.finish(),
    };
    for (v, m) in geom.mask.iter().enumerate() {
        let ijk = geom.voxel_ijk(v);
        if *m && ijk.iter().any(|&x| x == 0 || x == n - 1) {
            return Err(Error::Geometry("inclusion voxel on the cell boundary".into()));
        }
    }
    if !geom.matrix_connected() {
        return Err(Error::Geometry("matrix phase is not connected".into()));
    }
    Ok(geom)
}

impl CellGeometry {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn voxel_volume(&self) -> f64 {
        self.h().powi(3)
    }

    pub fn config(&self) -> &GeometryConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn num_voxels(&self) -> usize {
        self.mask.len()
    }

    pub fn is_inclusion(&self, v: usize) -> bool {
        self.mask[v]
    }

    pub fn inclusion_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn inclusion_volume(&self) -> f64 {
        self.inclusion_count() as f64 / self.mask.len() as f64
    }

    pub fn matrix_volume(&self) -> f64 {
        (self.mask.len() - self.inclusion_count()) as f64 / self.mask.len() as f64
    }

    pub fn voxel_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn voxel_ijk(&self, v: usize) -> [usize; 3] {
        let n = self.n;
        [v / (n * n), (v / n) % n, v % n]
    }

    /// Periodic neighbour across face `dir` (0..6: -x,+x,-y,+y,-z,+z).
    pub fn neighbor(&self, v: usize, dir: usize) -> usize {
        let n = self.n;
        let mut c = self.voxel_ijk(v);
        let axis = dir / 2;
        c[axis] = if dir % 2 == 0 {
            (c[axis] + n - 1) % n
        } else {
            (c[axis] + 1) % n
        };
        self.voxel_index(c[0], c[1], c[2])
    }

    /// Phase flags (touches Y1, touches Y2) of the periodic grid node (i,j,k),
    /// located at (i,j,k)*h.
    pub fn node_phases(&self, node: usize) -> (bool, bool) {
        let n = self.n;
        let c = [node / (n * n), (node / n) % n, node % n];
        let (mut y1, mut y2) = (false, false);
        for a in 0..8 {
            let v = self.voxel_index(
                (c[0] + n - (a & 1)) % n,
                (c[1] + n - ((a >> 1) & 1)) % n,
                (c[2] + n - ((a >> 2) & 1)) % n,
            );
            if self.mask[v] {
                y2 = true;
            } else {
                y1 = true;
            }
        }
        (y1, y2)
    }

    fn matrix_connected(&self) -> bool {
        let total = self.mask.iter().filter(|m| !**m).count();
        let Some(start) = self.mask.iter().position(|m| !*m) else {
            return false;
        };
        let mut seen = vec![false; self.mask.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for dir in 0..6 {
                let w = self.neighbor(v, dir);
                if !self.mask[w] && !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == total
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    #[default]
    All,
    Inclusion,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// b = gamma(y) xi.
    FixedDirection {
        xi: [f64; 3],
        gamma: String,
        #[serde(default)]
        support: Support,
    },
    /// b = (b1, b2, b3)(y); `xi` optionally names the interface direction.
    General {
        components: [String; 3],
        #[serde(default)]
        support: Support,
        #[serde(default)]
        xi: Option<[f64; 3]>,
    },
}

/// Compiled magnetic field.
#[derive(Debug, Clone)]
pub struct MagneticField {
    exprs: FieldExprs,
    support: Support,
    xi: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
enum FieldExprs {
    Fixed { xi: [f64; 3], gamma: Expr },
    General([Expr; 3]),
}

impl MagneticField {
    pub fn new(spec: &FieldSpec) -> Result<Self> {
        match spec {
            FieldSpec::FixedDirection { xi, gamma, support } => {
                let len = norm3(*xi);
                if (len - 1.0).abs() > 1e-12 {
                    return Err(Error::Field(format!("xi must be a unit vector (|xi| = {len})")));
                }
                Ok(MagneticField {
                    exprs: FieldExprs::Fixed {
                        xi: *xi,
                        gamma: Expr::parse(gamma, &CELL_VARS)?,
                    },
                    support: *support,
                    xi: Some(*xi),
                })
            }
            FieldSpec::General {
                components,
                support,
                xi,
            } => {
                if let Some(x) = xi {
                    let len = norm3(*x);
                    if (len - 1.0).abs() > 1e-12 {
                        return Err(Error::Field(format!("xi must be a unit vector (|xi| = {len})")));
                    }
                }
                Ok(MagneticField {
                    exprs: FieldExprs::General([
                        Expr::parse(&components[0], &CELL_VARS)?,
                        Expr::parse(&components[1], &CELL_VARS)?,
                        Expr::parse(&components[2], &CELL_VARS)?,
                    ]),
                    support: *support,
                    xi: *xi,
                })
            }
        }
    }

    pub fn is_fixed_direction(&self) -> bool {
        matches!(self.exprs, FieldExprs::Fixed { .. })
    }

    /// Direction named in the spec, if any.
    pub fn declared_xi(&self) -> Option<[f64; 3]> {
        self.xi
    }

    pub fn support(&self) -> Support {
        self.support
    }

    /// b at cell point y; `in_inclusion` selects the phase for the support rule.
    pub fn eval(&self, y: [f64; 3], in_inclusion: bool) -> [f64; 3] {
        let active = match self.support {
            Support::All => true,
            Support::Inclusion => in_inclusion,
            Support::Matrix => !in_inclusion,
        };
        if !active {
            return [0.0; 3];
        }
        match &self.exprs {
            FieldExprs::Fixed { xi, gamma } => {
                let g = gamma.eval(&y);
                [g * xi[0], g * xi[1], g * xi[2]]
            }
            FieldExprs::General(c) => [c[0].eval(&y), c[1].eval(&y), c[2].eval(&y)],
        }
    }
}

/// Where the values of a [`DiscreteField`] live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Voxel,
    Node,
}

/// Array of scalars or vectors on a structured grid, x-major with z fastest
/// and components innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    pub shape: [usize; 3],
    pub components: usize,
    pub location: Location,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn from_vectors(shape: [usize; 3], location: Location, v: &[[f64; 3]]) -> Self {
        DiscreteField {
            shape,
            components: 3,
            location,
            values: v.iter().flatten().copied().collect(),
        }
    }

    pub fn from_scalars(shape: [usize; 3], location: Location, v: Vec<f64>) -> Self {
        DiscreteField {
            shape,
            components: 1,
            location,
            values: v,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.values.len() == self.shape.iter().product::<usize>() * self.components
            && self.values.iter().all(|v| v.is_finite())
    }
}

/// Field b sampled on a cell geometry, with the nodal direction data used by
/// the constrained space on Y2.
#[derive(Debug, Clone)]
pub struct SampledField {
    n: usize,
    /// b at the 8 Gauss points of every voxel, index 8*v + g.
    pub gauss_b: Vec<[f64; 3]>,
    /// Voxel averages of b.
    pub voxel_b: Vec<[f64; 3]>,
    /// Unit direction d of b at nodes of the closure of Y2 (zero elsewhere).
    pub node_dir: Vec<[f64; 3]>,
    /// b-hat at the nodes of the closure of Y2, when a direction xi is known.
    pub node_bhat: Option<Vec<[f64; 3]>>,
    /// Direction xi used for b-hat.
    pub xi: Option<[f64; 3]>,
    pub fixed_direction: bool,
    /// Quadrature of |b-hat|^2 and b-hat over Y2.
    pub bhat_sq_integral: f64,
    pub bhat_integral: [f64; 3],
    /// Quadrature of b over Y1.
    pub matrix_integral: [f64; 3],
    pub b_max: f64,
    pub fingerprint: String,
}

/// Fraction of Y2 voxels allowed to carry a vanishing field.
pub const VANISHING_FRACTION: f64 = 1e-3;
/// Compatibility tolerance relative to ||b||_inf |Y1|.
pub const COMPAT_TOL: f64 = 1e-10;
/// Singular value ratio for the interface direction rank.
pub const RANK_TOL: f64 = 1e-6;

pub fn sample_field(spec: &FieldSpec, geom: &CellGeometry) -> Result<SampledField> {
    let field = MagneticField::new(spec)?;
    sample_magnetic_field(&field, geom)
}

pub fn sample_magnetic_field(field: &MagneticField, geom: &CellGeometry) -> Result<SampledField> {
    let n = geom.n();
    let h = geom.h();
    let gp = gauss_points();
    let nv = geom.num_voxels();
    let mut gauss_b = vec![[0.0; 3]; nv * 8];
    let mut voxel_b = vec![[0.0; 3]; nv];
    let mut b_max = 0.0f64;
    for v in 0..nv {
        let c = geom.voxel_ijk(v);
        let inc = geom.is_inclusion(v);
        for g in 0..8 {
            let y = [
                (c[0] as f64 + gp[g][0]) * h,
                (c[1] as f64 + gp[g][1]) * h,
                (c[2] as f64 + gp[g][2]) * h,
            ];
            let b = field.eval(y, inc);
            if !b.iter().all(|x| x.is_finite()) {
                return Err(Error::Field(format!("non-finite value at y = {y:?}")));
            }
            b_max = b_max.max(norm3(b));
            gauss_b[8 * v + g] = b;
            for d in 0..3 {
                voxel_b[v][d] += b[d] / 8.0;
            }
        }
    }
    if geom.inclusion_count() > 0 {
        let tiny = 1e-12 * b_max;
        let vanishing = (0..nv)
            .filter(|&v| geom.is_inclusion(v))
            .filter(|&v| (0..8).all(|g| norm3(gauss_b[8 * v + g]) <= tiny))
            .count();
        let frac = vanishing as f64 / geom.inclusion_count() as f64;
        if b_max == 0.0 || frac > VANISHING_FRACTION {
            return Err(Error::Field(format!(
                "b vanishes on {:.3}% of the inclusion voxels",
                100.0 * frac.max(if b_max == 0.0 { 1.0 } else { 0.0 })
            )));
        }
    }

    let w = geom.voxel_volume() / 8.0;
    let mut matrix_integral = [0.0; 3];
    for v in (0..nv).filter(|&v| !geom.is_inclusion(v)) {
        for g in 0..8 {
            for d in 0..3 {
                matrix_integral[d] += w * gauss_b[8 * v + g][d];
            }
        }
    }
    let tol = COMPAT_TOL * b_max * geom.matrix_volume();
    if norm3(matrix_integral) > tol {
        return Err(Error::Field(format!(
            "compatibility violated: |int_Y1 b| = {:e} exceeds {tol:e}",
            norm3(matrix_integral)
        )));
    }

    let fixed = field.is_fixed_direction();
    let xi = match field.declared_xi() {
        Some(x) => Some(x),
        None if geom.inclusion_count() > 0 => {
            let r = boundary_direction_rank(field, geom)?;
            (r.rank == 1).then_some(r.direction)
        }
        None => None,
    };

    // Reference orientation for nodal directions.
    let reference = xi.unwrap_or_else(|| {
        let mut dy = Matrix3::zeros();
        for v in (0..nv).filter(|&v| geom.is_inclusion(v)) {
            for g in 0..8 {
                add_dyad(&mut dy, gauss_b[8 * v + g]);
            }
        }
        top_eigenvector(&dy)
    });

    let mut node_dir = vec![[0.0; 3]; nv];
    for (node, dir) in node_dir.iter_mut().enumerate() {
        let c = [node / (n * n), (node / n) % n, node % n];
        let mut dy = Matrix3::zeros();
        let mut any = false;
        for a in 0..8 {
            let v = geom.voxel_index(
                (c[0] + n - (a & 1)) % n,
                (c[1] + n - ((a >> 1) & 1)) % n,
                (c[2] + n - ((a >> 2) & 1)) % n,
            );
            if geom.is_inclusion(v) {
                any = true;
                if !fixed {
                    for g in 0..8 {
                        add_dyad(&mut dy, gauss_b[8 * v + g]);
                    }
                }
            }
        }
        if !any {
            continue;
        }
        let mut d = if fixed { xi.unwrap() } else { top_eigenvector(&dy) };
        if dot3(d, reference) < 0.0 {
            d = [-d[0], -d[1], -d[2]];
        }
        *dir = d;
    }

    let node_bhat = xi.map(|x| {
        node_dir
            .iter()
            .map(|d| {
                if fixed && *d != [0.0; 3] {
                    x
                } else {
                    let s = dot3(*d, x);
                    [s * d[0], s * d[1], s * d[2]]
                }
            })
            .collect::<Vec<_>>()
    });

    let mut bhat_sq_integral = 0.0;
    let mut bhat_integral = [0.0; 3];
    if let Some(x) = xi {
        for v in (0..nv).filter(|&v| geom.is_inclusion(v)) {
            for g in 0..8 {
                let b = gauss_b[8 * v + g];
                let bb = dot3(b, b);
                if bb == 0.0 {
                    continue;
                }
                let bh = if fixed {
                    x
                } else {
                    let s = dot3(b, x) / bb;
                    [s * b[0], s * b[1], s * b[2]]
                };
                bhat_sq_integral += w * dot3(bh, bh);
                for d in 0..3 {
                    bhat_integral[d] += w * bh[d];
                }
            }
        }
    }

    let mut fp = Hasher::new("field");
    fp.str(geom.fingerprint());
    for b in &gauss_b {
        fp.f64s(b);
    }
    if let Some(x) = xi {
        fp.f64s(&x);
    }
    Ok(SampledField {
        n,
        gauss_b,
        voxel_b,
        node_dir,
        node_bhat,
        xi,
        fixed_direction: fixed,
        bhat_sq_integral,
        bhat_integral,
        matrix_integral,
        b_max,
        fingerprint: fp.finish(),
    })
}

fn add_dyad(m: &mut Matrix3<f64>, b: [f64; 3]) {
    let bb = dot3(b, b);
    if bb == 0.0 {
        return;
    }
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] += b[i] * b[j] / bb;
        }
    }
}

fn top_eigenvector(m: &Matrix3<f64>) -> [f64; 3] {
    let e = SymmetricEigen::new(*m);
    let k = e.eigenvalues.imax();
    let v = e.eigenvectors.column(k);
    [v[0], v[1], v[2]]
}

impl SampledField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b_field(&self) -> DiscreteField {
        DiscreteField::from_vectors([self.n; 3], Location::Voxel, &self.voxel_b)
    }

    pub fn bhat_field(&self) -> Option<DiscreteField> {
        self.node_bhat
            .as_ref()
            .map(|b| DiscreteField::from_vectors([self.n; 3], Location::Node, b))
    }

    /// Discrete H1 seminorm of b-hat over Y2 from its nodal values; the
    /// boundedness proxy for the regularity of b-hat.
    pub fn bhat_gradient_norm(&self, geom: &CellGeometry) -> Option<f64> {
        let bh = self.node_bhat.as_ref()?;
        let h = geom.h();
        let n = self.n;
        let t = crate::perfem::element::tabulate(h);
        let mut acc = 0.0;
        for v in (0..geom.num_voxels()).filter(|&v| geom.is_inclusion(v)) {
            let c = geom.voxel_ijk(v);
            for g in 0..8 {
                let mut grad = [[0.0; 3]; 3];
                for a in 0..8 {
                    let node =
                        (((c[0] + (a & 1)) % n) * n + (c[1] + ((a >> 1) & 1)) % n) * n + (c[2] + ((a >> 2) & 1)) % n;
                    for i in 0..3 {
                        for j in 0..3 {
                            grad[i][j] += bh[node][i] * t.grad[g][a][j];
                        }
                    }
                }
                acc += t.weight * grad.iter().flatten().map(|x| x * x).sum::<f64>();
            }
        }
        Some(acc.sqrt())
    }
}

/// Numerical rank of span{b} over the interface of Y2.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionRank {
    pub rank: usize,
    pub direction: [f64; 3],
    pub singular_values: [f64; 3],
}

pub fn boundary_direction_rank(field: &MagneticField, geom: &CellGeometry) -> Result<DirectionRank> {
    let h = geom.h();
    let mut gram = Matrix3::<f64>::zeros();
    let mut faces = 0usize;
    for v in (0..geom.num_voxels()).filter(|&v| geom.is_inclusion(v)) {
        let c = geom.voxel_ijk(v);
        for dir in 0..6 {
            if geom.is_inclusion(geom.neighbor(v, dir)) {
                continue;
            }
            faces += 1;
            let mut y = [
                (c[0] as f64 + 0.5) * h,
                (c[1] as f64 + 0.5) * h,
                (c[2] as f64 + 0.5) * h,
            ];
            y[dir / 2] += if dir % 2 == 0 { -0.5 * h } else { 0.5 * h };
            let b = field.eval(y, true);
            for i in 0..3 {
                for j in 0..3 {
                    gram[(i, j)] += b[i] * b[j];
                }
            }
        }
    }
    if faces == 0 {
        return Err(Error::Geometry("the inclusion has an empty interface".into()));
    }
    let e = SymmetricEigen::new(gram);
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| e.eigenvalues[*b].total_cmp(&e.eigenvalues[*a]));
    let sv = order.map(|k| e.eigenvalues[k].max(0.0).sqrt());
    if sv[0] == 0.0 {
        return Err(Error::Field("b vanishes on the whole interface".into()));
    }
    let rank = sv.iter().filter(|s| **s > RANK_TOL * sv[0]).count();
    let col = e.eigenvectors.column(order[0]);
    let mut direction = [col[0], col[1], col[2]];
    // Deterministic orientation: largest component positive.
    let imax = (0..3)
        .max_by(|a, b| direction[*a].abs().total_cmp(&direction[*b].abs()))
        .unwrap();
    if direction[imax] < 0.0 {
        direction = direction.map(|x| -x);
    }
    Ok(DirectionRank {
        rank,
        direction,
        singular_values: sv,
    })
}
