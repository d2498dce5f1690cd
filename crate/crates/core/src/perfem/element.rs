//! Trilinear hexahedral element on a cube of side h.
//!
//! Local node a = ax + 2*ay + 4*az with corner offsets (ax, ay, az) in {0,1}.
//! Element vectors are ordered dof = 3*a + component.

use super::tensor::ElasticTensor;

const G0: f64 = 0.5 - 0.5 / 1.732_050_807_568_877_2;
const G1: f64 = 0.5 + 0.5 / 1.732_050_807_568_877_2;

/// Two-point Gauss abscissae on [0, 1].
pub const GAUSS_1D: [f64; 2] = [G0, G1];

/// 2x2x2 Gauss points in reference coordinates, index g = gx + 2*gy + 4*gz.
pub fn gauss_points() -> [[f64; 3]; 8] {
    let mut p = [[0.0; 3]; 8];
    for (g, q) in p.iter_mut().enumerate() {
        *q = [GAUSS_1D[g & 1], GAUSS_1D[(g >> 1) & 1], GAUSS_1D[(g >> 2) & 1]];
    }
    p
}

pub fn corner(a: usize) -> [usize; 3] {
    [a & 1, (a >> 1) & 1, (a >> 2) & 1]
}

fn lin(c: usize, x: f64) -> f64 {
    if c == 0 {
        1.0 - x
    } else {
        x
    }
}

fn dlin(c: usize) -> f64 {
    if c == 0 {
        -1.0
    } else {
        1.0
    }
}

pub fn shape(a: usize, x: [f64; 3]) -> f64 {
    let c = corner(a);
    lin(c[0], x[0]) * lin(c[1], x[1]) * lin(c[2], x[2])
}

/// Gradient with respect to physical coordinates for an element of side h.
pub fn shape_grad(a: usize, x: [f64; 3], h: f64) -> [f64; 3] {
    let c = corner(a);
    let (lx, ly, lz) = (lin(c[0], x[0]), lin(c[1], x[1]), lin(c[2], x[2]));
    [
        dlin(c[0]) * ly * lz / h,
        lx * dlin(c[1]) * lz / h,
        lx * ly * dlin(c[2]) / h,
    ]
}

/// Shape values and physical gradients at the eight Gauss points.
pub struct Tabulation {
    pub n: [[f64; 8]; 8],
    pub grad: [[[f64; 3]; 8]; 8],
    pub weight: f64,
}

pub fn tabulate(h: f64) -> Tabulation {
    let gp = gauss_points();
    let mut t = Tabulation {
        n: [[0.0; 8]; 8],
        grad: [[[0.0; 3]; 8]; 8],
        weight: h * h * h / 8.0,
    };
    for g in 0..8 {
        for a in 0..8 {
            t.n[g][a] = shape(a, gp[g]);
            t.grad[g][a] = shape_grad(a, gp[g], h);
        }
    }
    t
}

/// 24x24 element stiffness for the form int A e(u):e(v), row-major.
pub fn vector_stiffness(c: &ElasticTensor, h: f64) -> Vec<f64> {
    let t = tabulate(h);
    let full = c.full();
    let mut k = vec![0.0; 24 * 24];
    for g in 0..8 {
        let gr = &t.grad[g];
        for a in 0..8 {
            for i in 0..3 {
                for b in 0..8 {
                    for kk in 0..3 {
                        // e(N_a e_i) : A e(N_b e_k) = sum_{jl} C_ijkl dN_a/dj dN_b/dl
                        let mut s = 0.0;
                        for j in 0..3 {
                            for l in 0..3 {
                                s += full[i][j][kk][l] * gr[a][j] * gr[b][l];
                            }
                        }
                        k[(3 * a + i) * 24 + 3 * b + kk] += t.weight * s;
                    }
                }
            }
        }
    }
    symmetrize(&mut k, 24);
    k
}

/// 8x8 scalar stiffness for int (D grad u).grad v with a constant matrix D.
pub fn scalar_stiffness(d: &[[f64; 3]; 3], h: f64) -> [f64; 64] {
    let t = tabulate(h);
    let mut k = [0.0; 64];
    for g in 0..8 {
        let gr = &t.grad[g];
        for a in 0..8 {
            for b in 0..8 {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += gr[a][i] * d[i][j] * gr[b][j];
                    }
                }
                k[a * 8 + b] += t.weight * s;
            }
        }
    }
    symmetrize(&mut k, 8);
    k
}

/// 8x8 consistent scalar mass matrix.
pub fn scalar_mass(h: f64) -> [f64; 64] {
    let t = tabulate(h);
    let mut m = [0.0; 64];
    for g in 0..8 {
        for a in 0..8 {
            for b in 0..8 {
                m[a * 8 + b] += t.weight * t.n[g][a] * t.n[g][b];
            }
        }
    }
    symmetrize(&mut m, 8);
    m
}

/// Element load int (A E):e(N_a e_i) for a constant strain E (24 entries).
pub fn strain_load(c: &ElasticTensor, strain: &[[f64; 3]; 3], h: f64) -> [f64; 24] {
    let t = tabulate(h);
    let sigma = c.apply(strain);
    let mut f = [0.0; 24];
    for g in 0..8 {
        for a in 0..8 {
            for i in 0..3 {
                let mut s = 0.0;
                for j in 0..3 {
                    s += sigma[i][j] * t.grad[g][a][j];
                }
                f[3 * a + i] += t.weight * s;
            }
        }
    }
    f
}

fn symmetrize(k: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (k[i * n + j] + k[j * n + i]);
            k[i * n + j] = s;
            k[j * n + i] = s;
        }
    }
}

/// Largest eigenvalue of a small symmetric row-major matrix.
pub fn max_eigenvalue(k: &[f64], n: usize) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(n, n, k);
    m.symmetric_eigenvalues().iter().fold(f64::MIN, |a, b| a.max(*b))
}
