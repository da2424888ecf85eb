//! Uniform periodic grid and nodal scalar fields.

use super::GeometryError;
use std::f64::consts::PI;

/// Uniform n×n grid on the unit square torus, carrying the bundle degree.
///
/// Node (i, j) sits at (i·h, j·h) with h = 1/n; i runs along x, j along y.
/// The area form has constant density 2π·deg, so `total_area` = 2π·deg and
/// each node carries weight 2π·deg·h².
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    deg: u32,
}

impl TorusGrid {
    /// n must be even and at least 16; deg at least 1.
    pub fn new(n: usize, deg: u32) -> Result<Self, GeometryError> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(GeometryError::BadGridSize { n });
        }
        if deg < 1 {
            return Err(GeometryError::BadDegree { deg });
        }
        Ok(TorusGrid { n, deg })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn deg(&self) -> u32 {
        self.deg
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    pub fn total_area(&self) -> f64 {
        2.0 * PI * f64::from(self.deg)
    }

    /// ω-weight carried by a single node.
    pub fn cell_weight(&self) -> f64 {
        self.total_area() / self.node_count() as f64
    }

    pub fn node_xy(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h(), j as f64 * self.h())
    }

    /// Row-major flat index with periodic wrapping.
    pub fn idx(&self, i: isize, j: isize) -> usize {
        let n = self.n as isize;
        let iw = i.rem_euclid(n) as usize;
        let jw = j.rem_euclid(n) as usize;
        iw * self.n + jw
    }
}

/// Real scalar field sampled at the grid nodes, row-major in (i, j).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.node_count()],
        }
    }

    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.node_count());
        for i in 0..n {
            for j in 0..n {
                let (x, y) = grid.node_xy(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { grid, values }
    }

    /// values.len() must equal grid.node_count().
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.node_count(), "field length/grid mismatch");
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n() + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "field grid mismatch");
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// self += a·x.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!(self.grid, x.grid, "field grid mismatch");
        for (v, &w) in self.values.iter_mut().zip(&x.values) {
            *v += a * w;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn add_scalar(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Plain node average; equals the ω-mean because the density is constant.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unweighted nodal inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "field grid mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// ∫ u ω over the torus: node sum times the constant ω-weight.
pub fn integrate(u: &ScalarField) -> f64 {
    u.values().iter().sum::<f64>() * u.grid().cell_weight()
}
