//! Periodic cell correctors on the matrix phase and the effective
//! coefficients of the limit equation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cross, dot3};
use crate::perfem::element::tabulate;
use crate::perfem::grid::NONE;
use crate::perfem::{
    unit_strain, Cg, CgOptions, CgReport, ConstrainedForms, ElasticTensor, LinearOperator, PeriodicElasticity,
    VOIGT_PAIRS,
};
use crate::unitcell::SampledField;

/// w_jk in Voigt pair order and theta_j, as nodal vectors of the periodic
/// elasticity operator, each with zero mean over Y1.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub w: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub reports: Vec<CgReport>,
    pub geometry_fingerprint: String,
}

/// Load vector int_{Y1} (b x e_j) . N_a e_i for each unknown (a, i).
pub fn lorentz_load(op: &PeriodicElasticity, field: &SampledField, j: usize) -> (Vec<f64>, f64) {
    let grid = *op.op.grid();
    let t = tabulate(grid.h);
    let mut ej = [0.0; 3];
    ej[j] = 1.0;
    let elem = |v: usize| -> [f64; 24] {
        let mut f = [0.0; 24];
        for g in 0..8 {
            let c = cross(field.gauss_b[8 * v + g], ej);
            for a in 0..8 {
                for i in 0..3 {
                    f[3 * a + i] += t.weight * c[i] * t.n[g][a];
                }
            }
        }
        f
    };
    let mut rhs = vec![0.0; op.op.dim()];
    rhs.par_chunks_mut(3).enumerate().for_each(|(u, ru)| {
        let node = op.op.unknown_node(u);
        for a in 0..8 {
            let v = grid.node_voxel(node, a).unwrap();
            if op.op.voxel_matrix(v).is_some() {
                let f = elem(v);
                for i in 0..3 {
                    ru[i] += f[3 * a + i];
                }
            }
        }
    });
    let reference = (0..grid.num_voxels())
        .filter(|&v| op.op.voxel_matrix(v).is_some())
        .map(|v| elem(v).iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    (rhs, reference)
}

pub fn solve_correctors(op: &PeriodicElasticity, field: &SampledField, opts: &CgOptions) -> Result<CorrectorSet> {
    if field.n() != op.op.grid().nvox {
        return Err(Error::Field("field resolution does not match the geometry".into()));
    }
    let tol = crate::unitcell::COMPAT_TOL * field.b_max * op.weights.iter().sum::<f64>();
    if crate::linalg::norm3(field.matrix_integral) > tol {
        return Err(Error::Field("compatibility violated: int_Y1 b != 0".into()));
    }
    let proj = op.projector();
    let cg = Cg::new(&op.op, Some(&proj), *opts);
    let jobs: Vec<(Vec<f64>, f64)> = VOIGT_PAIRS
        .iter()
        .map(|&(k, l)| op.strain_load(&unit_strain(k, l)))
        .chain((0..3).map(|j| {
            let (f, r) = lorentz_load(op, field, j);
            (f.into_iter().map(|x| -x).collect(), r)
        }))
        .collect();
    let solved: Vec<Result<(Vec<f64>, CgReport)>> = jobs
        .par_iter()
        .map(|(rhs, reference)| {
            let (mut x, rep) = cg.solve_with_floor(rhs, *reference)?;
            op.normalize_mean(&mut x);
            Ok((x, rep))
        })
        .collect();
    let mut w = Vec::new();
    let mut theta = Vec::new();
    let mut reports = Vec::new();
    for (i, r) in solved.into_iter().enumerate() {
        let (x, rep) = r?;
        reports.push(rep);
        if i < 6 {
            w.push(x);
        } else {
            theta.push(x);
        }
    }
    Ok(CorrectorSet {
        w,
        theta,
        reports,
        geometry_fingerprint: op.geometry_fingerprint.clone(),
    })
}

/// Effective coefficients. Serialized names follow the symbols of the limit
/// equation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HomogenizedCoefficients {
    #[serde(rename = "A1star")]
    pub a1star: [[f64; 6]; 6],
    #[serde(rename = "V1star")]
    pub v1star: [[f64; 3]; 3],
    /// W_kl = w*(E_kl); w*(M) = W : M for symmetric M.
    pub wstar: [[f64; 3]; 3],
    pub mstar: f64,
    pub mstar_quadratic: f64,
    #[serde(rename = "Mstar")]
    pub big_mstar: f64,
    pub cstar: f64,
    pub lambdastar: [f64; 3],
    pub mustar: [f64; 3],
    #[serde(rename = "A1dir")]
    pub a1dir: [[f64; 3]; 3],
    pub xi: [f64; 3],
    pub matrix_volume: f64,
    pub inclusion_volume: f64,
    pub bhat_sq_integral: f64,
    pub geometry_fingerprint: String,
}

/// Per-voxel integrals of e(u) over Y1 for a nodal field u.
fn strain_integral(op: &PeriodicElasticity, u: &[f64]) -> [[f64; 3]; 3] {
    let grid = *op.op.grid();
    let t = tabulate(grid.h);
    // int over a voxel of grad N_a
    let mut gint = [[0.0; 3]; 8];
    for g in 0..8 {
        for a in 0..8 {
            for d in 0..3 {
                gint[a][d] += t.weight * t.grad[g][a][d];
            }
        }
    }
    let partial: Vec<[[f64; 3]; 3]> = (0..grid.num_voxels())
        .into_par_iter()
        .with_min_len(1024)
        .map(|v| {
            let mut e = [[0.0; 3]; 3];
            if op.op.voxel_matrix(v).is_none() {
                return e;
            }
            for (a, &un) in op.op.corners(v).iter().enumerate() {
                if un == NONE {
                    continue;
                }
                for i in 0..3 {
                    for j in 0..3 {
                        let g = u[3 * un as usize + i] * gint[a][j];
                        e[i][j] += 0.5 * g;
                        e[j][i] += 0.5 * g;
                    }
                }
            }
            e
        })
        .collect();
    let mut total = [[0.0; 3]; 3];
    for e in partial {
        for i in 0..3 {
            for j in 0..3 {
                total[i][j] += e[i][j];
            }
        }
    }
    total
}

/// xi . int_{Y1} b x u by Gauss quadrature.
fn cross_integral(op: &PeriodicElasticity, field: &SampledField, u: &[f64], xi: [f64; 3]) -> f64 {
    let grid = *op.op.grid();
    let t = tabulate(grid.h);
    let partial: Vec<f64> = (0..grid.num_voxels())
        .into_par_iter()
        .with_min_len(1024)
        .map(|v| {
            if op.op.voxel_matrix(v).is_none() {
                return 0.0;
            }
            let corners = op.op.corners(v);
            let mut s = 0.0;
            for g in 0..8 {
                let mut ug = [0.0; 3];
                for (a, &un) in corners.iter().enumerate() {
                    if un != NONE {
                        for i in 0..3 {
                            ug[i] += t.n[g][a] * u[3 * un as usize + i];
                        }
                    }
                }
                s += t.weight * dot3(xi, cross(field.gauss_b[8 * v + g], ug));
            }
            s
        })
        .collect();
    partial.chunks(4096).map(|c| c.iter().sum::<f64>()).sum()
}

/// A1* in Voigt form: column J is int_{Y1} A1 (E_J + e(w_J)).
pub fn effective_tensor(op: &PeriodicElasticity, corr: &CorrectorSet) -> [[f64; 6]; 6] {
    let vol: f64 = op.weights.iter().sum();
    let mut a = [[0.0; 6]; 6];
    for (col, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
        let ew = strain_integral(op, &corr.w[col]);
        let e0 = unit_strain(k, l);
        let mut total = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                total[i][j] = vol * e0[i][j] + ew[i][j];
            }
        }
        let s = op.tensor.apply(&total);
        for (row, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
            a[row][col] = s[i][j];
        }
    }
    a
}

/// D_ik = sum_jl C_ijkl xi_j xi_l from a Voigt matrix.
pub fn directional(voigt: &[[f64; 6]; 6], xi: [f64; 3]) -> [[f64; 3]; 3] {
    let v = crate::perfem::tensor::voigt;
    let mut d = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    d[i][k] += voigt[v(i, j)][v(k, l)] * xi[j] * xi[l];
                }
            }
        }
    }
    d
}

pub fn homogenized_coefficients(
    op: &PeriodicElasticity,
    corr: &CorrectorSet,
    forms: &ConstrainedForms,
    field: &SampledField,
) -> Result<HomogenizedCoefficients> {
    if corr.geometry_fingerprint != op.geometry_fingerprint {
        return Err(Error::Fingerprint {
            artifact: "correctors".into(),
            expected: op.geometry_fingerprint.clone(),
            found: corr.geometry_fingerprint.clone(),
        });
    }
    let xi = field
        .xi
        .ok_or_else(|| Error::Unsupported("the limit equation needs a single interface direction xi".into()))?;
    let a1star = effective_tensor(op, corr);
    let n = corr.theta[0].len();
    let theta_xi: Vec<f64> = (0..n).map(|i| (0..3).map(|j| xi[j] * corr.theta[j][i]).sum()).collect();
    let v1star = strain_integral(op, &theta_xi);
    let mut wstar = [[0.0; 3]; 3];
    for (p, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
        let val = cross_integral(op, field, &corr.w[p], xi);
        wstar[k][l] = val;
        wstar[l][k] = val;
    }
    let mstar = cross_integral(op, field, &theta_xi, xi);
    let mstar_quadratic = op.energy(&theta_xi, &theta_xi);
    let scale = mstar.abs().max(mstar_quadratic.abs());
    if (mstar - mstar_quadratic).abs() > 1e-8 * scale + 1e-14 * (1.0 + field.b_max * field.b_max) {
        return Err(Error::Numerical(format!(
            "the two expressions for m* disagree: {mstar:e} vs {mstar_quadratic:e}"
        )));
    }
    let y1: f64 = op.weights.iter().sum();
    let y2 = 1.0 - y1;
    let cstar = forms
        .bhat_energy()
        .ok_or_else(|| Error::Unsupported("b-hat is undefined without a direction xi".into()))?;
    let mut lambdastar = [0.0; 3];
    for i in 0..3 {
        let wx: f64 = (0..3).map(|k| wstar[i][k] * xi[k]).sum();
        let vx: f64 = (0..3).map(|k| v1star[i][k] * xi[k]).sum();
        lambdastar[i] = wx - vx;
    }
    let mustar = std::array::from_fn(|i| y1 * xi[i] + field.bhat_integral[i]);
    let a1dir = directional(&a1star, xi);
    Ok(HomogenizedCoefficients {
        a1star,
        v1star,
        wstar,
        mstar,
        mstar_quadratic,
        big_mstar: y1 + mstar + field.bhat_sq_integral,
        cstar,
        lambdastar,
        mustar,
        a1dir,
        xi,
        matrix_volume: y1,
        inclusion_volume: y2,
        bhat_sq_integral: field.bhat_sq_integral,
        geometry_fingerprint: op.geometry_fingerprint.clone(),
    })
}

impl HomogenizedCoefficients {
    /// Coefficients of the case where b = gamma xi vanishes on the matrix
    /// and b-hat = xi: M* = 1, c* = 0, lambda* = 0, mu* = xi.
    pub fn is_constant_direction_inclusion_case(&self, field: &SampledField) -> bool {
        field.fixed_direction && field.matrix_integral == [0.0; 3] && self.mstar == 0.0 && self.cstar == 0.0
    }

    pub fn a1star_tensor(&self) -> Result<ElasticTensor> {
        ElasticTensor::from_voigt(self.a1star)
    }
}
