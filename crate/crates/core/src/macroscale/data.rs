use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, MACRO_VARS};

fn zero3() -> [String; 3] {
    ["0".into(), "0".into(), "0".into()]
}

/// Closed-form macroscopic data as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "zero3")]
    pub u0: [String; 3],
    #[serde(default = "zero3")]
    pub v0: [String; 3],
    #[serde(default = "zero3")]
    pub f: [String; 3],
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            u0: zero3(),
            v0: zero3(),
            f: zero3(),
        }
    }
}

/// Step of the finite-difference stencils applied to u0.
pub const DIFF_STEP: f64 = 1e-3;

/// Initial displacement, initial velocity and body force.
#[derive(Debug, Clone)]
pub struct InitialData {
    u0: [Expr; 3],
    v0: [Expr; 3],
    f: [Expr; 3],
}

fn parse3(src: &[String; 3], what: &str, allow_t: bool) -> Result<[Expr; 3]> {
    let mut out = Vec::with_capacity(3);
    for (i, s) in src.iter().enumerate() {
        let e = Expr::parse(s, &MACRO_VARS).map_err(|e| Error::Config(format!("{what}[{i}]: {e}")))?;
        if !allow_t && e.uses_var(3) {
            return Err(Error::Config(format!("{what}[{i}] must not depend on t")));
        }
        out.push(e);
    }
    Ok([out[0].clone(), out[1].clone(), out[2].clone()])
}

impl InitialData {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        Ok(InitialData {
            u0: parse3(&spec.u0, "u0", false)?,
            v0: parse3(&spec.v0, "v0", false)?,
            f: parse3(&spec.f, "f", true)?,
        })
    }

    /// u0 must vanish on the boundary of the unit cube. Checked on a
    /// 33 x 33 sample of every face.
    pub fn check_boundary(&self) -> Result<()> {
        const M: usize = 33;
        let mut scale: f64 = 1.0;
        for i in 0..M {
            for j in 0..M {
                for k in 0..M {
                    let x = [i as f64 / 32.0, j as f64 / 32.0, k as f64 / 32.0];
                    scale = scale.max(self.u0(x).iter().fold(0.0f64, |m, v| m.max(v.abs())));
                }
            }
        }
        for axis in 0..3 {
            for side in [0.0, 1.0] {
                for i in 0..M {
                    for j in 0..M {
                        let (a, b) = (i as f64 / 32.0, j as f64 / 32.0);
                        let x = match axis {
                            0 => [side, a, b],
                            1 => [a, side, b],
                            _ => [a, b, side],
                        };
                        let u = self.u0(x);
                        if u.iter().any(|v| !v.is_finite() || v.abs() > 1e-10 * scale) {
                            return Err(Error::Config(format!(
                                "u0 does not vanish on the boundary: u0({x:?}) = {u:?}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn u0(&self, x: [f64; 3]) -> [f64; 3] {
        let v = [x[0], x[1], x[2], 0.0];
        std::array::from_fn(|i| self.u0[i].eval(&v))
    }

    pub fn v0(&self, x: [f64; 3]) -> [f64; 3] {
        let v = [x[0], x[1], x[2], 0.0];
        std::array::from_fn(|i| self.v0[i].eval(&v))
    }

    pub fn f(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let v = [x[0], x[1], x[2], t];
        std::array::from_fn(|i| self.f[i].eval(&v))
    }

    pub fn u0_is_zero(&self) -> bool {
        self.u0.iter().all(Expr::is_zero)
    }

    pub fn v0_is_zero(&self) -> bool {
        self.v0.iter().all(Expr::is_zero)
    }

    pub fn f_is_zero(&self) -> bool {
        self.f.iter().all(Expr::is_zero)
    }

    pub fn f_is_static(&self) -> bool {
        self.f.iter().all(|e| !e.uses_var(3))
    }

    /// Second derivative d_j d_l u0_k by fourth-order differences.
    fn second_derivative(&self, k: usize, j: usize, l: usize, x: [f64; 3]) -> f64 {
        let d = DIFF_STEP;
        let at = |sj: f64, sl: f64| {
            let mut y = x;
            y[j] += sj * d;
            y[l] += sl * d;
            self.u0[k].eval(&[y[0], y[1], y[2], 0.0])
        };
        if j == l {
            (-at(2.0, 0.0) + 16.0 * at(1.0, 0.0) - 30.0 * at(0.0, 0.0) + 16.0 * at(-1.0, 0.0) - at(-2.0, 0.0))
                / (12.0 * d * d)
        } else {
            const S: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
            let mut v = 0.0;
            for &(a, ca) in &S {
                for &(b, cb) in &S {
                    v += ca * cb * at(a, b);
                }
            }
            v / (144.0 * d * d)
        }
    }

    /// div(A1* e(u0) xi) = sum C*_{jmkl} xi_m d_j d_l u0_k.
    pub fn div_term(&self, c: &crate::perfem::ElasticTensor, xi: [f64; 3], x: [f64; 3]) -> f64 {
        if self.u0_is_zero() {
            return 0.0;
        }
        let mut s = 0.0;
        for j in 0..3 {
            for l in j..3 {
                for k in 0..3 {
                    let mut coef = 0.0;
                    for (m, &xm) in xi.iter().enumerate() {
                        coef += c.c(j, m, k, l) * xm;
                        if l != j {
                            coef += c.c(l, m, k, j) * xm;
                        }
                    }
                    if coef != 0.0 {
                        s += coef * self.second_derivative(k, j, l, x);
                    }
                }
            }
        }
        s
    }
}
