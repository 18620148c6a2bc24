//! Truncated size grid on `[0, s_max]` with composite trapezoid quadrature.

use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "ratio")]
pub enum Spacing {
    Uniform,
    /// Cell widths grow geometrically by `ratio` from `s = 0`.
    Graded(f64),
}

impl fmt::Display for Spacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spacing::Uniform => write!(f, "uniform"),
            Spacing::Graded(r) => write!(f, "graded:{r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    spacing: Spacing,
}

impl Grid {
    /// Builds `n_cells` cells on `[0, s_max]`.
    pub fn build(s_max: f64, n_cells: usize, spacing: Spacing) -> Result<Arc<Grid>> {
        if !(s_max.is_finite() && s_max > 0.0) {
            return Err(Error::InvalidGrid(format!("s_max must be > 0, got {s_max}")));
        }
        if n_cells < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 cells, got {n_cells}")));
        }
        let widths: Vec<f64> = match spacing {
            Spacing::Uniform => vec![s_max / n_cells as f64; n_cells],
            Spacing::Graded(r) => {
                if !(r.is_finite() && r > 0.0) || r == 1.0 {
                    return Err(Error::InvalidGrid(format!("graded ratio must be > 0 and != 1, got {r}")));
                }
                let h0 = s_max * (r - 1.0) / (r.powi(n_cells as i32) - 1.0);
                (0..n_cells).map(|i| h0 * r.powi(i as i32)).collect()
            }
        };
        let mut nodes = Vec::with_capacity(n_cells + 1);
        nodes.push(0.0);
        for (i, h) in widths.iter().enumerate() {
            nodes.push(nodes[i] + h);
        }
        // pin the right end exactly
        nodes[n_cells] = s_max;
        Ok(Arc::new(Self::from_nodes_unchecked(nodes, spacing)))
    }

    pub fn uniform(s_max: f64, n_cells: usize) -> Result<Arc<Grid>> {
        Grid::build(s_max, n_cells, Spacing::Uniform)
    }

    /// Grid from explicit ascending nodes starting at 0.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Arc<Grid>> {
        if nodes.len() < 3 || nodes[0] != 0.0 {
            return Err(Error::InvalidGrid("nodes must start at 0 and have at least 3 entries".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("nodes must be strictly ascending".into()));
        }
        Ok(Arc::new(Self::from_nodes_unchecked(nodes, Spacing::Uniform)))
    }

    fn from_nodes_unchecked(nodes: Vec<f64>, spacing: Spacing) -> Grid {
        let n = nodes.len();
        let mut weights = vec![0.0; n];
        for i in 0..n - 1 {
            let h = nodes[i + 1] - nodes[i];
            weights[i] += 0.5 * h;
            weights[i + 1] += 0.5 * h;
        }
        Grid {
            nodes,
            weights,
            spacing,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn s_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Width of cell `i`, i.e. `s_i − s_{i−1}` for `i ≥ 1`.
    pub fn width(&self, i: usize) -> f64 {
        self.nodes[i] - self.nodes[i - 1]
    }

    pub fn min_width(&self) -> f64 {
        (1..self.len()).map(|i| self.width(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_width(&self) -> f64 {
        (1..self.len()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    pub fn same_nodes(&self, other: &Grid) -> bool {
        self.nodes == other.nodes
    }
}

/// Values of a function sampled at every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("grid function has non-finite values".into()));
        }
        Ok(GridFunction { grid, values })
    }

    pub(crate) fn from_vec(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        GridFunction::from_vec(grid.clone(), vec![0.0; grid.len()])
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&s| f(s)).collect();
        GridFunction::from_vec(grid.clone(), values)
    }

    /// Linear interpolation of scattered samples `(xs, ys)` onto the grid,
    /// constant extrapolation outside the sample range.
    pub fn interpolate(grid: &Arc<Grid>, xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::InvalidParameter("interpolation needs matching nonempty samples".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("interpolation abscissae must be ascending".into()));
        }
        let values = grid
            .nodes()
            .iter()
            .map(|&s| {
                if s <= xs[0] {
                    return ys[0];
                }
                if s >= xs[xs.len() - 1] {
                    return ys[ys.len() - 1];
                }
                let j = xs.partition_point(|&x| x <= s);
                let (x0, x1) = (xs[j - 1], xs[j]);
                let t = (s - x0) / (x1 - x0);
                ys[j - 1] * (1.0 - t) + ys[j] * t
            })
            .collect();
        GridFunction::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction::from_vec(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise `f(s, v)`.
    pub fn map_with_node(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&s, &v)| f(s, v))
            .collect();
        GridFunction::from_vec(self.grid.clone(), values)
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_nodes(&other.grid));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        GridFunction::from_vec(self.grid.clone(), values)
    }

    /// `Σ wᵢ fᵢ`
    pub fn integrate(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// `Σ wᵢ fᵢ gᵢ`
    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// Trapezoid L¹ norm.
    pub fn l1_norm(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.abs())
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Running trapezoid integral `g(sᵢ) = ∫₀^{sᵢ} f`, with `g(s₀) = 0`.
    pub fn cumulative_integral(&self) -> GridFunction {
        let nodes = self.grid.nodes();
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.values.len() {
            acc += 0.5 * (nodes[i] - nodes[i - 1]) * (self.values[i - 1] + self.values[i]);
            out.push(acc);
        }
        GridFunction::from_vec(self.grid.clone(), out)
    }

    /// Second-order three-point differences: centered in the interior,
    /// one-sided at both ends. Exact on quadratics for any node spacing.
    pub fn derivative(&self) -> GridFunction {
        let x = self.grid.nodes();
        let f = &self.values;
        let n = f.len();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h1 = x[i] - x[i - 1];
            let h2 = x[i + 1] - x[i];
            d[i] = -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1];
        }
        let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
        d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2];
        let (h1, h2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
        d[n - 1] =
            h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2] + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * f[n - 1];
        GridFunction::from_vec(self.grid.clone(), d)
    }
}

impl Index<usize> for GridFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Free-function spelling of [`GridFunction::integrate`].
pub fn integrate(f: &GridFunction) -> f64 {
    f.integrate()
}

pub fn cumulative_integral(f: &GridFunction) -> GridFunction {
    f.cumulative_integral()
}

pub fn grid_derivative(f: &GridFunction) -> GridFunction {
    f.derivative()
}
