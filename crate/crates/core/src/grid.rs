//! Rectangular domain, cell-centred collocation grid and nodal fields.
//!
//! Nodes sit at cell centres `x_i = (i + 1/2) Lx / nx`. On this node set the
//! Neumann cosine modes `cos(pπx/Lx)` are exactly orthogonal under the
//! uniform midpoint weights `hx·hy`, which is the inner product shared by
//! every solver and diagnostic in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectDomain {
    lx: f64,
    ly: f64,
}

impl RectDomain {
    pub fn new(lx: f64, ly: f64) -> Result<Self> {
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::Validation(format!(
                "domain side lengths must be positive (got {lx} x {ly})"
            )));
        }
        Ok(Self { lx, ly })
    }

    /// `[0, π] × [0, π]`.
    pub fn pi_square() -> Self {
        Self {
            lx: std::f64::consts::PI,
            ly: std::f64::consts::PI,
        }
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Wavenumbers `pπ/Lx`, `qπ/Ly`.
    pub fn wavenumbers(&self, p: usize, q: usize) -> (f64, f64) {
        (
            p as f64 * std::f64::consts::PI / self.lx,
            q as f64 * std::f64::consts::PI / self.ly,
        )
    }

    /// Neumann eigenvalue `(pπ/Lx)² + (qπ/Ly)²` of `-Δ`.
    pub fn eigenvalue(&self, p: usize, q: usize) -> f64 {
        let (kx, ky) = self.wavenumbers(p, q);
        kx * kx + ky * ky
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    domain: RectDomain,
    nx: usize,
    ny: usize,
}

impl Grid {
    pub fn new(domain: RectDomain, nx: usize, ny: usize) -> Result<Self> {
        if nx < 4 || ny < 4 || !nx.is_multiple_of(2) || !ny.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "grid sizes must be even and >= 4 (got {nx} x {ny})"
            )));
        }
        Ok(Self { domain, nx, ny })
    }

    pub fn domain(&self) -> RectDomain {
        self.domain
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn hx(&self) -> f64 {
        self.domain.lx / self.nx as f64
    }
    pub fn hy(&self) -> f64 {
        self.domain.ly / self.ny as f64
    }
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }

    /// Row-major index, `x` fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

/// Nodal values on a [`Grid`], row-major with `x` varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                data.push(f(grid.x(i), y));
            }
        }
        Self { grid, data }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Validation(format!(
                "field has {} values, grid needs {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Midpoint-rule integral over the domain.
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_area()
    }

    /// Discrete `∫ u v`.
    pub fn inner(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_area()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.inner(self)
    }

    /// Discrete `∫ (u - v)²`.
    pub fn l2_dist_sq(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * self.grid.cell_area()
    }

    /// Discrete `∫ (u - k)²`.
    pub fn l2_dist_sq_const(&self, k: f64) -> f64 {
        self.data.iter().map(|a| (a - k) * (a - k)).sum::<f64>() * self.grid.cell_area()
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn max_abs_dev(&self, k: f64) -> f64 {
        self.data.iter().fold(0.0, |acc, a| acc.max((a - k).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        Field {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }
}

/// The three unknowns at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub m: Field,
    pub c: Field,
    pub d: Field,
    pub t: f64,
}

impl State {
    pub fn uniform(grid: Grid, (m, c, d): (f64, f64, f64)) -> Self {
        Self {
            m: Field::constant(grid, m),
            c: Field::constant(grid, c),
            d: Field::constant(grid, d),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.m.grid()
    }

    pub fn fields(&self) -> [(&'static str, &Field); 3] {
        [("m", &self.m), ("c", &self.c), ("d", &self.d)]
    }

    /// Name of the first field holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.fields()
            .into_iter()
            .find(|(_, f)| !f.is_finite())
            .map(|(name, _)| name)
    }

    /// Max-norm distance to a homogeneous state, over all three fields.
    pub fn max_dev_from(&self, (m, c, d): (f64, f64, f64)) -> f64 {
        self.m
            .max_abs_dev(m)
            .max(self.c.max_abs_dev(c))
            .max(self.d.max_abs_dev(d))
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        self.m
            .max_abs_diff(&other.m)
            .max(self.c.max_abs_diff(&other.c))
            .max(self.d.max_abs_diff(&other.d))
    }

    pub fn max_abs(&self) -> f64 {
        self.m.max_abs().max(self.c.max_abs()).max(self.d.max_abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        let dom = RectDomain::pi_square();
        assert!(Grid::new(dom, 2, 8).is_err());
        assert!(Grid::new(dom, 7, 8).is_err());
        assert!(Grid::new(dom, 8, 6).is_ok());
        assert!(RectDomain::new(0.0, 1.0).is_err());
        assert!(RectDomain::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn cell_centred_nodes() {
        let g = Grid::new(RectDomain::new(2.0, 4.0).unwrap(), 4, 8).unwrap();
        assert_eq!(g.x(0), 0.25);
        assert_eq!(g.x(3), 1.75);
        assert_eq!(g.y(7), 3.75);
        assert_eq!(g.index(1, 2), 9);
    }

    #[test]
    fn midpoint_quadrature_is_exact_for_cosine_products() {
        let g = Grid::new(RectDomain::pi_square(), 16, 16).unwrap();
        let u = Field::from_fn(g, |x, y| (2.0 * x).cos() * (2.0 * y).cos());
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((u.l2_norm_sq() - pi2 / 4.0).abs() < 1e-13);
        assert!(u.integral().abs() < 1e-13);
        assert!((Field::constant(g, 1.0).l1_norm() - pi2).abs() < 1e-13);
    }
}
