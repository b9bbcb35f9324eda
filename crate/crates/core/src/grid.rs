//! Uniform-grid function representations on `[0,1]` and on the triangle
//! `T = {0 <= y <= x <= 1}`, together with the quadrature, norm, and
//! convolution primitives the kernel solvers and the simulator build on.
//!
//! All quadrature is the composite trapezoid rule and all convolutions are
//! direct `O(n^2)` sums; grids are uniform with spacing `h = 1/n_cells`.

use crate::error::{Error, Result};

/// Values of a function on the uniform grid `x_i = i / n_cells` over `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction1D {
    n_cells: usize,
    values: Vec<f64>,
}

impl GridFunction1D {
    pub fn new(n_cells: usize, values: Vec<f64>) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::InvalidConfig("n_cells must be positive".into()));
        }
        if values.len() != n_cells + 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                n_cells + 1,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("GridFunction1D values"));
        }
        Ok(Self { n_cells, values })
    }

    pub fn from_fn(n_cells: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = 1.0 / n_cells as f64;
        let values = (0..=n_cells).map(|i| f(i as f64 * h)).collect();
        Self { n_cells, values }
    }

    pub fn constant(n_cells: usize, value: f64) -> Self {
        Self {
            n_cells,
            values: vec![value; n_cells + 1],
        }
    }

    pub fn zeros(n_cells: usize) -> Self {
        Self::constant(n_cells, 0.0)
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Grid spacing `h = 1/n_cells`.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_cells: self.n_cells,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_match(self.n_cells, other.n_cells)?;
        Ok(Self {
            n_cells: self.n_cells,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// In-place `self += other`, used by the series solvers on matching grids.
    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.n_cells, other.n_cells);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

/// Values of a function on the discretized triangle `T = {0 <= y <= x <= 1}`,
/// stored row-major lower-triangular: entry `(i,j)` exists for `0 <= j <= i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularGridFunction {
    n_cells: usize,
    values: Vec<f64>,
}

impl TriangularGridFunction {
    pub fn new(n_cells: usize, values: Vec<f64>) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::InvalidConfig("n_cells must be positive".into()));
        }
        let expected = Self::storage_len(n_cells);
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {} triangular values, got {}",
                expected,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("TriangularGridFunction values"));
        }
        Ok(Self { n_cells, values })
    }

    pub fn from_fn(n_cells: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = 1.0 / n_cells as f64;
        let mut values = Vec::with_capacity(Self::storage_len(n_cells));
        for i in 0..=n_cells {
            for j in 0..=i {
                values.push(f(i as f64 * h, j as f64 * h));
            }
        }
        Self { n_cells, values }
    }

    pub fn constant(n_cells: usize, value: f64) -> Self {
        Self {
            n_cells,
            values: vec![value; Self::storage_len(n_cells)],
        }
    }

    pub fn zeros(n_cells: usize) -> Self {
        Self::constant(n_cells, 0.0)
    }

    pub fn storage_len(n_cells: usize) -> usize {
        (n_cells + 1) * (n_cells + 2) / 2
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        i * (i + 1) / 2 + j
    }

    /// Value at `(x_i, y_j)`. Accessing `j > i` is a contract violation.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(
            j <= i && i <= self.n_cells,
            "triangular access out of domain: ({i},{j})"
        );
        self.values[self.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j <= i && i <= self.n_cells,
            "triangular access out of domain: ({i},{j})"
        );
        let idx = self.index(i, j);
        self.values[idx] = v;
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_cells: self.n_cells,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_match(self.n_cells, other.n_cells)?;
        Ok(Self {
            n_cells: self.n_cells,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.n_cells, other.n_cells);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    /// The boundary row `k(1, y_j)`, used by the 2D feedback law.
    pub fn top_row(&self) -> GridFunction1D {
        let n = self.n_cells;
        let values = (0..=n).map(|j| self.get(n, j)).collect();
        GridFunction1D { n_cells: n, values }
    }
}

pub(crate) fn check_match(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(a, b));
    }
    Ok(())
}

/// Trapezoid-rule approximation of the running integral of `f` up to
/// `x = upper_index * h`. Exact for affine integrands.
pub fn trapezoid_integrate(f: &GridFunction1D, upper_index: usize) -> Result<f64> {
    if upper_index > f.n_cells {
        return Err(Error::IndexOutOfRange {
            index: upper_index,
            n_cells: f.n_cells,
        });
    }
    Ok(trapezoid_slice(&f.values[..=upper_index], f.h()))
}

/// Trapezoid sum of consecutive samples with spacing `h`.
pub(crate) fn trapezoid_slice(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * values[0] + interior + 0.5 * values[values.len() - 1])
}

/// Volterra convolution `(a * b)(x) = integral_0^x a(x-y) b(y) dy` evaluated
/// at every grid point by the trapezoid rule; the result vanishes at `x = 0`.
pub fn convolve(a: &GridFunction1D, b: &GridFunction1D) -> Result<GridFunction1D> {
    check_match(a.n_cells, b.n_cells)?;
    let n = a.n_cells;
    let h = a.h();
    let mut values = vec![0.0; n + 1];
    for i in 1..=n {
        let mut sum = 0.5 * (a.values[i] * b.values[0] + a.values[0] * b.values[i]);
        for j in 1..i {
            sum += a.values[i - j] * b.values[j];
        }
        values[i] = sum * h;
    }
    Ok(GridFunction1D { n_cells: n, values })
}

/// Supremum norm over the grid.
pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl GridFunction1D {
    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// `L^2[0,1]` norm: square root of the trapezoid integral of `f^2`.
    pub fn l2_norm(&self) -> f64 {
        let sq = self.map(|v| v * v);
        trapezoid_slice(&sq.values, self.h()).max(0.0).sqrt()
    }
}

impl TriangularGridFunction {
    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }
}
