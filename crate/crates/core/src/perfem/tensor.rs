use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voigt index of the symmetric pair (i, j): 11,22,33,23,13,12.
pub const fn voigt(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) | (2, 1) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

/// Index pairs in Voigt order.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Unit symmetric strain E^{kl} = (e_k x e_l + e_l x e_k) / 2.
pub fn unit_strain(k: usize, l: usize) -> [[f64; 3]; 3] {
    let mut e = [[0.0; 3]; 3];
    e[k][l] += 0.5;
    e[l][k] += 0.5;
    e
}

/// Symmetric fourth-order elastic tensor stored as a 6x6 Voigt matrix
/// (engineering shear convention: sigma_I = C_IJ * eps_J with eps_4 = 2 e_23).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticTensor {
    voigt: [[f64; 6]; 6],
}

/// Config form of a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorSpec {
    Isotropic { isotropic: IsotropicPair },
    Voigt { voigt: [[f64; 6]; 6] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicPair {
    pub lambda: f64,
    pub mu: f64,
}

impl TensorSpec {
    pub fn build(&self) -> Result<ElasticTensor> {
        match self {
            TensorSpec::Isotropic { isotropic } => ElasticTensor::isotropic(isotropic.lambda, isotropic.mu),
            TensorSpec::Voigt { voigt } => ElasticTensor::from_voigt(*voigt),
        }
    }
}

impl ElasticTensor {
    pub fn isotropic(lambda: f64, mu: f64) -> Result<Self> {
        let mut v = [[0.0; 6]; 6];
        for i in 0..3 {
            for j in 0..3 {
                v[i][j] = lambda;
            }
            v[i][i] = lambda + 2.0 * mu;
            v[i + 3][i + 3] = mu;
        }
        Self::from_voigt(v)
    }

    pub fn from_voigt(voigt: [[f64; 6]; 6]) -> Result<Self> {
        let scale = voigt.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if !voigt.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::Tensor("non-finite entry".into()));
        }
        for i in 0..6 {
            for j in 0..i {
                if (voigt[i][j] - voigt[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::Tensor(format!("Voigt matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        let t = ElasticTensor { voigt };
        let a = t.ellipticity();
        if !(a > 1e-12 * scale) {
            return Err(Error::Tensor(format!(
                "tensor is not uniformly elliptic (smallest eigenvalue {a:e})"
            )));
        }
        Ok(t)
    }

    /// Identity on symmetric matrices: A e = e.
    pub fn identity() -> Self {
        Self::isotropic(0.0, 0.5).expect("identity tensor is elliptic")
    }

    pub fn voigt(&self) -> &[[f64; 6]; 6] {
        &self.voigt
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut v = self.voigt;
        v.iter_mut().flatten().for_each(|x| *x *= c);
        ElasticTensor { voigt: v }
    }

    /// Smallest eigenvalue of the tensor acting on symmetric matrices with the
    /// Frobenius inner product (Mandel-scaled Voigt matrix).
    pub fn ellipticity(&self) -> f64 {
        let s = [1.0, 1.0, 1.0, 2f64.sqrt(), 2f64.sqrt(), 2f64.sqrt()];
        let m = nalgebra::Matrix6::from_fn(|i, j| self.voigt[i][j] * s[i] * s[j]);
        m.symmetric_eigenvalues().min()
    }

    pub fn c(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.voigt[voigt(i, j)][voigt(k, l)]
    }

    pub fn full(&self) -> [[[[f64; 3]; 3]; 3]; 3] {
        let mut f = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        f[i][j][k][l] = self.c(i, j, k, l);
                    }
                }
            }
        }
        f
    }

    pub fn apply(&self, e: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut s = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        acc += self.c(i, j, k, l) * e[k][l];
                    }
                }
                s[i][j] = acc;
            }
        }
        s
    }

    /// A e : e' for symmetric matrices.
    pub fn contract(&self, e: &[[f64; 3]; 3], f: &[[f64; 3]; 3]) -> f64 {
        let s = self.apply(e);
        (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| s[i][j] * f[i][j])
            .sum()
    }

    /// Acoustic tensor: D_ik = sum_jl C_ijkl xi_j xi_l, so that
    /// D zeta = A (zeta (.) xi) xi with the symmetrized product.
    pub fn directional(&self, xi: [f64; 3]) -> [[f64; 3]; 3] {
        let mut d = [[0.0; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                let mut s = 0.0;
                for j in 0..3 {
                    for l in 0..3 {
                        s += self.c(i, j, k, l) * xi[j] * xi[l];
                    }
                }
                d[i][k] = s;
            }
        }
        d
    }
}
