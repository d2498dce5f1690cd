#![allow(dead_code)]

pub mod macro_oracles;

use maghom_core::perfem::ElasticTensor;
use maghom_core::unitcell::{
    build_geometry, sample_field, CellGeometry, FieldSpec, GeometryConfig, SampledField, ShapeKind, Support,
};

pub fn cube_geometry(n: usize) -> CellGeometry {
    build_geometry(&GeometryConfig {
        shape: ShapeKind::Cube,
        center: [0.5; 3],
        size: 0.5,
        n,
    })
    .unwrap()
}

/// b = 4 e3 on the inclusion, zero on the matrix.
pub fn example_field(geom: &CellGeometry) -> SampledField {
    sample_field(
        &FieldSpec::FixedDirection {
            xi: [0.0, 0.0, 1.0],
            gamma: "4".into(),
            support: Support::Inclusion,
        },
        geom,
    )
    .unwrap()
}

/// Orthotropic tensor with distinct entries.
pub fn orthotropic() -> ElasticTensor {
    let mut c = [[0.0; 6]; 6];
    c[0][0] = 3.0;
    c[1][1] = 2.5;
    c[2][2] = 4.0;
    c[0][1] = 0.8;
    c[1][0] = 0.8;
    c[0][2] = 0.6;
    c[2][0] = 0.6;
    c[1][2] = 0.7;
    c[2][1] = 0.7;
    c[3][3] = 1.1;
    c[4][4] = 0.9;
    c[5][5] = 1.3;
    ElasticTensor::from_voigt(c).unwrap()
}

pub fn unit_isotropic() -> ElasticTensor {
    ElasticTensor::isotropic(1.0, 1.0).unwrap()
}

/// One separable mode of the discrete Dirichlet problem on a cube inclusion
/// of side `side` with Q1 elements of size h and a diagonal coefficient.
#[derive(Debug, Clone, Copy)]
pub struct CubeMode {
    pub lambda: f64,
    /// int s for the mass-normalized mode.
    pub mean: f64,
    pub index: [usize; 3],
}

/// All discrete modes, ascending. Tensor-product structure: the element
/// stiffness is sum_d A_dd K1 (x) M1 (x) M1 and the mass M1 (x) M1 (x) M1.
pub fn discrete_cube_modes(side: f64, h: f64, diag: [f64; 3]) -> Vec<CubeMode> {
    let m = (side / h).round() as usize;
    let lam1 = |k: usize| {
        let c = (k as f64 * std::f64::consts::PI / m as f64).cos();
        6.0 / (h * h) * (1.0 - c) / (2.0 + c)
    };
    // int over the interval of the mass-normalized 1D mode
    let mean1 = |k: usize| {
        let theta = k as f64 * std::f64::consts::PI / m as f64;
        let c = theta.cos();
        let sum: f64 = (1..m).map(|j| (theta * j as f64).sin()).sum();
        let norm_sq = h / 6.0 * (4.0 + 2.0 * c) * (m as f64 / 2.0);
        h * sum / norm_sq.sqrt()
    };
    let mut out = Vec::new();
    for a in 1..m {
        for b in 1..m {
            for c in 1..m {
                out.push(CubeMode {
                    lambda: diag[0] * lam1(a) + diag[1] * lam1(b) + diag[2] * lam1(c),
                    mean: mean1(a) * mean1(b) * mean1(c),
                    index: [a, b, c],
                });
            }
        }
    }
    out.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    out
}
