use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroBoundary {
    /// alpha = 0 on the boundary of the unit cube.
    Dirichlet,
    /// Unit-periodic; used to test spatially constant data.
    Periodic,
}

/// Uniform node grid over the unit cube, `cells` intervals per axis.
/// Node index is x-major with z fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroGrid {
    cells: usize,
    boundary: MacroBoundary,
}

impl MacroGrid {
    pub fn new(cells: usize, boundary: MacroBoundary) -> Result<Self> {
        if cells < 2 {
            return Err(Error::Config(format!(
                "macro grid needs at least 2 cells per axis, got {cells}"
            )));
        }
        Ok(MacroGrid { cells, boundary })
    }

    pub fn dirichlet(cells: usize) -> Result<Self> {
        Self::new(cells, MacroBoundary::Dirichlet)
    }

    pub fn periodic(cells: usize) -> Result<Self> {
        Self::new(cells, MacroBoundary::Periodic)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn boundary(&self) -> MacroBoundary {
        self.boundary
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn per_axis(&self) -> usize {
        match self.boundary {
            MacroBoundary::Dirichlet => self.cells + 1,
            MacroBoundary::Periodic => self.cells,
        }
    }

    pub fn len(&self) -> usize {
        self.per_axis().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        let m = self.per_axis();
        (c[0] * m + c[1]) * m + c[2]
    }

    pub fn ijk(&self, p: usize) -> [usize; 3] {
        let m = self.per_axis();
        [p / (m * m), (p / m) % m, p % m]
    }

    pub fn position(&self, p: usize) -> [f64; 3] {
        let c = self.ijk(p);
        let h = self.h();
        [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h]
    }

    /// Nodes whose value is prescribed (zero).
    pub fn is_fixed(&self, p: usize) -> bool {
        match self.boundary {
            MacroBoundary::Periodic => false,
            MacroBoundary::Dirichlet => self.ijk(p).iter().any(|&c| c == 0 || c == self.cells),
        }
    }

    /// Neighbour of a free node shifted by `off` along each axis.
    pub fn shift(&self, p: usize, off: [isize; 3]) -> usize {
        let m = self.per_axis() as isize;
        let c = self.ijk(p);
        let mut s = [0usize; 3];
        for d in 0..3 {
            let v = c[d] as isize + off[d];
            s[d] = match self.boundary {
                MacroBoundary::Periodic => v.rem_euclid(m) as usize,
                MacroBoundary::Dirichlet => v.clamp(0, m - 1) as usize,
            };
        }
        self.index(s)
    }

    /// Quadrature weight of a node: trapezoidal on the Dirichlet box.
    pub fn weight(&self, p: usize) -> f64 {
        let h = self.h();
        match self.boundary {
            MacroBoundary::Periodic => h * h * h,
            MacroBoundary::Dirichlet => self
                .ijk(p)
                .iter()
                .map(|&c| if c == 0 || c == self.cells { 0.5 * h } else { h })
                .product(),
        }
    }

    /// int over the unit cube of a nodal field.
    pub fn integral(&self, field: &[f64]) -> f64 {
        let w: Vec<f64> = (0..self.len()).map(|p| self.weight(p) * field[p]).collect();
        crate::linalg::sum(&w)
    }

    /// Trilinear interpolation at a point of the closed unit cube.
    pub fn interpolate(&self, field: &[f64], x: [f64; 3]) -> f64 {
        let n = self.cells as f64;
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let s = (x[d] * n).clamp(0.0, n);
            let mut i = s.floor() as isize;
            if i as usize >= self.cells {
                i = self.cells as isize - 1;
            }
            base[d] = i;
            frac[d] = s - i as f64;
        }
        let p0 = self.index([base[0] as usize, base[1] as usize, base[2] as usize]);
        let mut v = 0.0;
        for a in 0..8 {
            let off = [(a & 1) as isize, ((a >> 1) & 1) as isize, ((a >> 2) & 1) as isize];
            let w: f64 = (0..3)
                .map(|d| if off[d] == 1 { frac[d] } else { 1.0 - frac[d] })
                .product();
            if w != 0.0 {
                v += w * field[self.shift(p0, off)];
            }
        }
        v
    }
}
