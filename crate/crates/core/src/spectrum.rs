//! Lowest eigenpairs of the constrained pencil S s = mu^2 M s on the inclusion.
//!
//! Block Lanczos on T = S^{-1} M, which is self-adjoint in the M inner
//! product; its largest eigenvalues 1/mu^2 are the ones wanted. Every new
//! block is fully reorthogonalized (twice) against the stored basis, and the
//! final Ritz pairs are polished by subspace iteration until their true
//! residuals meet the contract.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::perfem::{Cg, CgOptions, ConstrainedForms, LinearOperator};

/// Residual contract ||S s - mu^2 M s|| <= RESIDUAL_TOL ||M s||.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Pencils up to this dimension are solved densely.
pub const DENSE_LIMIT: usize = 600;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Block width; capped at the number of requested pairs.
    pub block: usize,
    pub inner_tol: f64,
    pub inner_maxiter: usize,
    pub seed: u64,
    pub max_polish: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            block: 8,
            inner_tol: 1e-12,
            inner_maxiter: 50_000,
            seed: 0x6d61_6768_6f6d,
            max_polish: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenMode {
    pub mu: f64,
    #[serde(skip)]
    pub s: Vec<f64>,
    pub hbar: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSet {
    pub modes: Vec<EigenMode>,
    pub dim: usize,
    pub fingerprint: String,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// The first `n` modes.
    pub fn truncated(&self, n: usize) -> ModeSet {
        ModeSet {
            modes: self.modes[..n.min(self.modes.len())].to_vec(),
            dim: self.dim,
            fingerprint: self.fingerprint.clone(),
        }
    }
}

/// Statistics of one eigensolve.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EigenReport {
    pub basis_size: usize,
    pub inner_solves: usize,
    pub polish_rounds: usize,
    pub max_residual: f64,
    pub max_orthogonality_defect: f64,
}

pub fn solve_modes(forms: &ConstrainedForms, count: usize, opts: &EigenOptions) -> Result<(ModeSet, EigenReport)> {
    let (pairs, report) = solve_pencil(&forms.s, &forms.m, count, opts)?;
    let modes = pairs
        .into_iter()
        .map(|(lambda, s)| EigenMode {
            mu: lambda.sqrt(),
            hbar: forms.mean(&s),
            s,
        })
        .collect();
    Ok((
        ModeSet {
            modes,
            dim: forms.dim(),
            fingerprint: forms.fingerprint.clone(),
        },
        report,
    ))
}

/// int |b-hat|^2 - sum_i (hbar_i . xi)^2.
pub fn sum_rule_defect(modes: &ModeSet, bhat_sq_integral: f64, xi: [f64; 3]) -> f64 {
    let captured: f64 = modes
        .modes
        .iter()
        .map(|m| crate::linalg::dot3(m.hbar, xi).powi(2))
        .sum();
    bhat_sq_integral - captured
}

/// The `count` smallest eigenpairs (lambda, s) of S s = lambda M s, sorted by
/// increasing lambda, M-orthonormal.
pub fn solve_pencil(
    s_op: &dyn LinearOperator,
    m_op: &dyn LinearOperator,
    count: usize,
    opts: &EigenOptions,
) -> Result<(Vec<(f64, Vec<f64>)>, EigenReport)> {
    let n = s_op.dim();
    if count == 0 {
        return Err(Error::Config("at least one mode must be requested".into()));
    }
    if count > n {
        return Err(Error::Config(format!(
            "{count} modes requested but the constrained space has dimension {n}"
        )));
    }
    let (mut pairs, mut report) = if n <= DENSE_LIMIT {
        dense_pencil(s_op, m_op, count)?
    } else {
        lanczos(s_op, m_op, count, opts)?
    };
    for (_, v) in pairs.iter_mut() {
        fix_sign(v);
    }
    let (res, orth) = check_pairs(s_op, m_op, &pairs);
    report.max_residual = res;
    report.max_orthogonality_defect = orth;
    if res > RESIDUAL_TOL || orth > RESIDUAL_TOL {
        return Err(Error::EigenStagnation {
            converged: 0,
            requested: count,
        });
    }
    Ok((pairs, report))
}

fn fix_sign(v: &mut [f64]) {
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * vmax) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Largest relative residual and largest deviation from M-orthonormality.
pub fn check_pairs(s_op: &dyn LinearOperator, m_op: &dyn LinearOperator, pairs: &[(f64, Vec<f64>)]) -> (f64, f64) {
    let ms: Vec<Vec<f64>> = pairs.par_iter().map(|(_, v)| m_op.apply_new(v)).collect();
    let res = pairs
        .par_iter()
        .zip(&ms)
        .map(|((lambda, v), mv)| {
            let sv = s_op.apply_new(v);
            let r: f64 = sv
                .iter()
                .zip(mv)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            r / norm(mv)
        })
        .reduce(|| 0.0, f64::max);
    let orth = (0..pairs.len())
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| {
                    let g = dot(&pairs[j].1, &ms[i]);
                    (g - if i == j { 1.0 } else { 0.0 }).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    (res, orth)
}

fn assemble_dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    let n = op.dim();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op.apply_new(&e)
        })
        .collect();
    let mut a = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    let at = a.transpose();
    a = (a + at) * 0.5;
    a
}

/// Small generalized symmetric problem A c = lambda B c, B positive definite.
/// Returns eigenvalues ascending and B-orthonormal eigenvectors as columns.
fn generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut c = &linv * a * linv.transpose();
    let ct = c.transpose();
    c = (c + ct) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|i, j| eig.eigenvalues[*i].total_cmp(&eig.eigenvalues[*j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(a.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((vals, linv.transpose() * y))
}

fn dense_pencil(
    s_op: &dyn LinearOperator,
    m_op: &dyn LinearOperator,
    count: usize,
) -> Result<(Vec<(f64, Vec<f64>)>, EigenReport)> {
    let n = s_op.dim();
    let a = assemble_dense(s_op);
    let b = assemble_dense(m_op);
    let (vals, vecs) = generalized_eigen(&a, &b)?;
    let pairs = (0..count)
        .map(|k| (vals[k], vecs.column(k).iter().copied().collect()))
        .collect();
    Ok((
        pairs,
        EigenReport {
            basis_size: n,
            ..Default::default()
        },
    ))
}

struct Basis {
    q: Vec<Vec<f64>>,
    mq: Vec<Vec<f64>>,
}

impl Basis {
    /// Orthogonalize `z` against the basis twice in the M inner product.
    fn orthogonalize(&self, z: &mut [f64]) {
        for _ in 0..2 {
            let coef: Vec<f64> = self.mq.par_iter().map(|mq| dot(mq, z)).collect();
            for (c, q) in coef.iter().zip(&self.q) {
                axpy(-c, q, z);
            }
        }
    }
}

fn lanczos(
    s_op: &dyn LinearOperator,
    m_op: &dyn LinearOperator,
    count: usize,
    opts: &EigenOptions,
) -> Result<(Vec<(f64, Vec<f64>)>, EigenReport)> {
    let n = s_op.dim();
    // a block wider than the wanted set only adds inner solves
    let p = opts.block.min(count).clamp(1, n);
    let max_basis = n.min(3 * count + 20 * p);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cg_opts = CgOptions {
        cg_tol: opts.inner_tol,
        cg_maxiter: opts.inner_maxiter,
    };
    let solver = Cg::new(s_op, None, cg_opts);
    let mut report = EigenReport::default();

    let mut basis = Basis {
        q: Vec::new(),
        mq: Vec::new(),
    };
    let mut w: Vec<Vec<f64>> = Vec::new();
    // g[i][j] = (M q_i) . w_j for processed columns.
    let mut g: Vec<Vec<f64>> = Vec::new();
    let mut last_r: Option<DMatrix<f64>> = None;

    let start: Vec<Vec<f64>> = (0..p).map(|_| random_vec(&mut rng, n)).collect();
    append_block(&mut basis, m_op, start, &mut rng)?;
    let mut next_check = count + p;
    let ritz: Option<(Vec<f64>, DMatrix<f64>)>;

    loop {
        let first = w.len();
        let new_w: Vec<Result<Vec<f64>>> = basis.mq[first..]
            .par_iter()
            .map(|mq| solver.solve(mq).map(|(x, _)| x))
            .collect();
        report.inner_solves += new_w.len();
        for x in new_w {
            w.push(x?);
        }
        let k = w.len();
        for row in g.iter_mut() {
            row.resize(k, 0.0);
        }
        g.resize(k, vec![0.0; k]);
        let entries: Vec<(usize, usize, f64)> = (0..k)
            .into_par_iter()
            .flat_map_iter(|i| {
                let lo = if i >= first { 0 } else { first };
                let mq = &basis.mq[i];
                let w = &w;
                (lo..k).map(move |j| (i, j, dot(mq, &w[j])))
            })
            .collect();
        for (i, j, v) in entries {
            g[i][j] = v;
        }

        let exhausted = k >= n;
        if k >= next_check || exhausted || k >= max_basis {
            let gm = DMatrix::from_fn(k, k, |i, j| 0.5 * (g[i][j] + g[j][i]));
            let eig = SymmetricEigen::new(gm);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
            let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let c = DMatrix::from_fn(k, k, |r, col| eig.eigenvectors[(r, order[col])]);
            let converged = if exhausted {
                count
            } else {
                // The residual of a Ritz pair lives in the next block:
                // ||T y - theta y||_M = ||R c_last||.
                let r = last_r.as_ref().unwrap();
                let pb = r.ncols();
                (0..count)
                    .take_while(|&i| {
                        let tail = DVector::from_fn(pb, |t, _| c[(k - pb + t, i)]);
                        (r * tail).norm() <= 1e-11 * theta[i].abs()
                    })
                    .count()
            };
            if converged >= count || exhausted {
                ritz = Some((theta, c));
                break;
            }
            if k >= max_basis {
                return Err(Error::EigenStagnation {
                    converged,
                    requested: count,
                });
            }
            next_check = k + (k / 6).max(4 * p);
        }

        // Next block: T applied to the last block, orthogonalized.
        let block: Vec<Vec<f64>> = w[first..k].to_vec();
        let room = n - basis.q.len();
        let block: Vec<Vec<f64>> = block.into_iter().take(room).collect();
        last_r = Some(append_block(&mut basis, m_op, block, &mut rng)?);
    }
    report.basis_size = basis.q.len();

    let (theta, c) = ritz.unwrap();
    let k = w.len();
    let mut vecs: Vec<Vec<f64>> = (0..count + p.min(k - count))
        .into_par_iter()
        .map(|i| {
            let mut y = vec![0.0; n];
            for j in 0..k {
                axpy(c[(j, i)], &basis.q[j], &mut y);
            }
            y
        })
        .collect();
    drop(w);
    drop(basis);
    let mut pairs: Vec<(f64, Vec<f64>)> = vecs.iter().zip(&theta).map(|(v, t)| (1.0 / t, v.clone())).collect();
    pairs.truncate(count);

    for round in 0..=opts.max_polish {
        let (res, _) = check_pairs(s_op, m_op, &pairs);
        if res <= 0.8 * RESIDUAL_TOL {
            break;
        }
        if round == opts.max_polish {
            break;
        }
        report.polish_rounds += 1;
        // One step of subspace iteration followed by Rayleigh-Ritz.
        let z: Vec<Vec<f64>> = vecs
            .par_iter()
            .map(|v| solver.solve(&m_op.apply_new(v)).map(|(x, _)| x))
            .collect::<Result<_>>()?;
        report.inner_solves += z.len();
        let (vals, vs) = rayleigh_ritz(s_op, m_op, &z)?;
        vecs = vs;
        pairs = vals
            .into_iter()
            .zip(vecs.iter().cloned())
            .take(count)
            .map(|(l, v)| (l, v))
            .collect();
    }
    Ok((pairs, report))
}

fn rayleigh_ritz(
    s_op: &dyn LinearOperator,
    m_op: &dyn LinearOperator,
    z: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = z.len();
    let n = z[0].len();
    let sz: Vec<Vec<f64>> = z.par_iter().map(|v| s_op.apply_new(v)).collect();
    let mz: Vec<Vec<f64>> = z.par_iter().map(|v| m_op.apply_new(v)).collect();
    let a = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&z[i], &sz[j]) + dot(&z[j], &sz[i])));
    let b = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&z[i], &mz[j]) + dot(&z[j], &mz[i])));
    let (vals, c) = generalized_eigen(&a, &b)?;
    let vecs = (0..k)
        .into_par_iter()
        .map(|col| {
            let mut y = vec![0.0; n];
            for j in 0..k {
                axpy(c[(j, col)], &z[j], &mut y);
            }
            y
        })
        .collect();
    Ok((vals, vecs))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
}

/// M-orthonormalize `block` against the basis and within itself, append it,
/// and return the triangular factor R of block = Q_new R (columns that lose
/// rank are replaced by fresh random directions with a zero R column).
fn append_block(
    basis: &mut Basis,
    m_op: &dyn LinearOperator,
    block: Vec<Vec<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let pb = block.len();
    let n = m_op.dim();
    let mut r = DMatrix::zeros(pb, pb);
    let mut block = block;
    block.par_iter_mut().for_each(|z| basis.orthogonalize(z));
    let start = basis.q.len();
    for j in 0..pb {
        let mut z = std::mem::take(&mut block[j]);
        let before = {
            let mz = m_op.apply_new(&z);
            dot(&z, &mz).max(0.0).sqrt()
        };
        // within-block Gram-Schmidt against the columns just added
        for pass in 0..2 {
            for i in start..basis.q.len() {
                let c = dot(&basis.mq[i], &z);
                if pass == 0 {
                    r[(i - start, j)] = c;
                } else {
                    r[(i - start, j)] += c;
                }
                axpy(-c, &basis.q[i], &mut z);
            }
        }
        let mut mz = m_op.apply_new(&z);
        let mut nrm = dot(&z, &mz).max(0.0).sqrt();
        if !(nrm > 1e-10 * before) || before == 0.0 {
            for i in start..basis.q.len() {
                r[(i - start, j)] = if before == 0.0 { 0.0 } else { r[(i - start, j)] };
            }
            let mut fresh = random_vec(rng, n);
            basis.orthogonalize(&mut fresh);
            mz = m_op.apply_new(&fresh);
            nrm = dot(&fresh, &mz).sqrt();
            z = fresh;
            r[(j, j)] = 0.0;
        } else {
            r[(j, j)] = nrm;
        }
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(Error::Numerical("Lanczos basis lost rank".into()));
        }
        crate::linalg::scale(1.0 / nrm, &mut z);
        crate::linalg::scale(1.0 / nrm, &mut mz);
        basis.q.push(z);
        basis.mq.push(mz);
    }
    Ok(r)
}
