//! Uniform grids on [0, 1], grid fields, quadrature weights and Neumann stencils.

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::sqrt;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDoc", into = "GridDoc")]
pub struct Grid {
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    #[serde(rename = "M")]
    m: usize,
}

impl TryFrom<GridDoc> for Grid {
    type Error = Error;
    fn try_from(d: GridDoc) -> Result<Grid> {
        Grid::new(d.m)
    }
}

impl From<Grid> for GridDoc {
    fn from(g: Grid) -> GridDoc {
        GridDoc { m: g.m }
    }
}

impl Grid {
    pub fn new(m: usize) -> Result<Grid> {
        if m < 5 {
            return Err(Error::Config(format!("grid needs at least 5 nodes, got {m}")));
        }
        Ok(Grid { m })
    }

    /// Smallest grid with spacing at most `dx`.
    pub fn with_spacing(dx: f64) -> Result<Grid> {
        Grid::new(libm::ceil(1.0 / dx) as usize + 1)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.m - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / (self.m - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.x(i)).collect()
    }

    /// Resolution rule dx <= eps / 8.
    pub fn check_resolution(&self, eps: f64) -> Result<()> {
        if self.dx() > eps / 8.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!("grid spacing {} exceeds eps/8 = {}", self.dx(), eps / 8.0)));
        }
        Ok(())
    }

    pub fn weights(&self, rule: Rule) -> Vec<f64> {
        let m = self.m;
        let h = self.dx();
        let mut w = vec![h; m];
        match rule {
            Rule::Trapezoid => {
                w[0] = 0.5 * h;
                w[m - 1] = 0.5 * h;
            }
            Rule::Simpson => {
                let intervals = m - 1;
                let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
                w.iter_mut().for_each(|v| *v = 0.0);
                for i in (0..simpson_end).step_by(2) {
                    w[i] += h / 3.0;
                    w[i + 1] += 4.0 * h / 3.0;
                    w[i + 2] += h / 3.0;
                }
                if simpson_end < intervals {
                    let i = simpson_end;
                    w[i] += 3.0 * h / 8.0;
                    w[i + 1] += 9.0 * h / 8.0;
                    w[i + 2] += 9.0 * h / 8.0;
                    w[i + 3] += 3.0 * h / 8.0;
                }
            }
        }
        w
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    #[default]
    Trapezoid,
    Simpson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<GridField> {
        if values.len() != grid.m() {
            return Err(Error::Config(format!("field has {} values for {} nodes", values.len(), grid.m())));
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: Grid) -> GridField {
        GridField { grid, values: vec![0.0; grid.m()] }
    }

    pub fn from_fn<F: FnMut(f64) -> f64>(grid: Grid, mut f: F) -> GridField {
        GridField { grid, values: (0..grid.m()).map(|i| f(grid.x(i))).collect() }
    }

    pub fn inner(&self, other: &GridField, rule: Rule) -> f64 {
        inner(&self.values, &other.values, &self.grid.weights(rule))
    }

    pub fn norm_l2(&self, rule: Rule) -> f64 {
        sqrt(self.inner(self, rule).max(0.0))
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.values)
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        GridField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn inner(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Central second-difference stencils, applied with even reflection at both ends.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// Three-point stencil with ghosts u_{-1} = u_1, u_M = u_{M-2}.
    #[default]
    Second,
    Fourth,
    Eighth,
}

impl Stencil {
    /// Coefficients c_0, c_1, ... of u_xx ~ (c_0 u_i + sum_k c_k (u_{i+k} + u_{i-k})) / dx^2.
    pub fn coeffs(self) -> &'static [f64] {
        match self {
            Stencil::Second => &[-2.0, 1.0],
            Stencil::Fourth => &[-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
            Stencil::Eighth => &[-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
        }
    }

    /// Upper bound of the stencil symbol, i.e. the largest |eigenvalue| times dx^2.
    pub fn spectral_radius(self) -> f64 {
        let c = self.coeffs();
        (0..=64)
            .map(|i| {
                let th = core::f64::consts::PI * i as f64 / 64.0;
                let mut s = c[0];
                for (k, ck) in c.iter().enumerate().skip(1) {
                    s += 2.0 * ck * libm::cos(k as f64 * th);
                }
                s.abs()
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
fn reflect(j: isize, last: isize) -> usize {
    let period = 2 * last;
    let mut j = j.rem_euclid(period);
    if j > last {
        j = period - j;
    }
    j as usize
}

/// u_xx with homogeneous Neumann reflection. Writes into `out`.
pub fn laplacian_into(u: &[f64], dx: f64, stencil: Stencil, out: &mut [f64]) {
    let c = stencil.coeffs();
    let m = u.len();
    let last = (m - 1) as isize;
    let k = c.len() - 1;
    let inv = 1.0 / (dx * dx);
    for i in 0..m {
        // differences against u_i so that constants map to exactly zero
        let mut s = 0.0;
        if i >= k && i + k < m {
            for (q, cq) in c.iter().enumerate().skip(1) {
                s += cq * ((u[i + q] - u[i]) + (u[i - q] - u[i]));
            }
        } else {
            for (q, cq) in c.iter().enumerate().skip(1) {
                let q = q as isize;
                s += cq * ((u[reflect(i as isize + q, last)] - u[i]) + (u[reflect(i as isize - q, last)] - u[i]));
            }
        }
        out[i] = s * inv;
    }
}

pub fn laplacian(u: &GridField, stencil: Stencil) -> GridField {
    let mut out = vec![0.0; u.values.len()];
    laplacian_into(&u.values, u.grid.dx(), stencil, &mut out);
    GridField { grid: u.grid, values: out }
}

/// Second-order Neumann Laplacian.
pub fn lap_neumann(u: &GridField) -> GridField {
    laplacian(u, Stencil::Second)
}
