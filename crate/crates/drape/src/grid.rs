//! Structured grid and discretized deformation fields.
//!
//! Nodes are uniform per axis: `x_i = -1/2 + i/(nx-1)` spans the canonical
//! width, `y_j = -L + j*L/(ny-1)` runs from the bottom (`j = 0`) to the
//! clamped top edge (`j = ny-1`). Arrays are row-major in `y`:
//! `index = j*nx + i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Domain length `L` (canonical units).
    #[serde(rename = "L")]
    pub l: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, l: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need nx, ny >= 2, got {nx}x{ny}")));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidGrid(format!("need L > 0, got {l}")));
        }
        Ok(Grid { nx, ny, l })
    }

    /// Default resolution for wrinkles of period `w0`: 24 nodes per period
    /// in x (at least 129 nodes), `ny` chosen by the caller.
    pub fn default_for(w0: f64, l: f64, ny: usize) -> Result<Self> {
        let nx = (24.0 * (1.0 / w0).round() + 1.0).max(129.0) as usize;
        Grid::new(nx, ny, l)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.l / (self.ny - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -0.5 + i as f64 * self.dx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        -self.l + j as f64 * self.dy()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    /// Index of the clamped top row (`y = 0`).
    #[inline]
    pub fn top_row(&self) -> usize {
        self.ny - 1
    }

    pub fn nodes_per_period(&self, w0: f64) -> f64 {
        w0 / self.dx()
    }

    /// True when the grid meets the 16-nodes-per-period resolution contract.
    pub fn resolves(&self, w0: f64) -> bool {
        self.nodes_per_period(w0) >= 16.0 - 1e-12
    }
}

/// Discretized deformation: in-plane displacements `u_x`, `u_y` and
/// out-of-plane displacement `xi`, one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub grid: Grid,
    pub u_x: Vec<f64>,
    pub u_y: Vec<f64>,
    pub xi: Vec<f64>,
}

impl DeformationField {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.n_nodes();
        DeformationField { grid, u_x: vec![0.0; n], u_y: vec![0.0; n], xi: vec![0.0; n] }
    }

    /// Builds a field from raw arrays, rejecting shape mismatches and any
    /// non-finite entry.
    pub fn from_parts(grid: Grid, u_x: Vec<f64>, u_y: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        let n = grid.n_nodes();
        if u_x.len() != n || u_y.len() != n || xi.len() != n {
            return Err(Error::InvalidGrid(format!(
                "array lengths ({}, {}, {}) do not match grid {}x{}",
                u_x.len(),
                u_y.len(),
                xi.len(),
                grid.nx,
                grid.ny
            )));
        }
        let field = DeformationField { grid, u_x, u_y, xi };
        field.check_finite()?;
        Ok(field)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, arr) in [("u_x", &self.u_x), ("u_y", &self.u_y), ("xi", &self.xi)] {
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteField(name));
            }
        }
        Ok(())
    }

    /// Overwrites the top row of all three components.
    pub fn set_top_row(&mut self, u_x: &[f64], u_y: &[f64], xi: &[f64]) {
        let nx = self.grid.nx;
        let off = self.grid.idx(0, self.grid.top_row());
        self.u_x[off..off + nx].copy_from_slice(u_x);
        self.u_y[off..off + nx].copy_from_slice(u_y);
        self.xi[off..off + nx].copy_from_slice(xi);
    }

    pub fn top_row(&self, component: Component) -> &[f64] {
        let nx = self.grid.nx;
        let off = self.grid.idx(0, self.grid.top_row());
        &self.component(component)[off..off + nx]
    }

    pub fn component(&self, c: Component) -> &[f64] {
        match c {
            Component::Ux => &self.u_x,
            Component::Uy => &self.u_y,
            Component::Xi => &self.xi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Ux,
    Uy,
    Xi,
}

/// Per-node Dirichlet mask, shared by all three components.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    fixed: Vec<bool>,
}

impl Mask {
    /// No pinned nodes.
    pub fn free(grid: &Grid) -> Self {
        Mask { fixed: vec![false; grid.n_nodes()] }
    }

    /// Pins the entire top row (the clamped edge).
    pub fn top_row(grid: &Grid) -> Self {
        let mut fixed = vec![false; grid.n_nodes()];
        let off = grid.idx(0, grid.top_row());
        for f in &mut fixed[off..off + grid.nx] {
            *f = true;
        }
        Mask { fixed }
    }

    #[inline]
    pub fn is_fixed(&self, node: usize) -> bool {
        self.fixed[node]
    }

    /// Zeroes masked entries of a per-node array.
    pub fn zero_fixed(&self, values: &mut [f64]) {
        for (v, &fixed) in values.iter_mut().zip(&self.fixed) {
            if fixed {
                *v = 0.0;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_coordinates() {
        let g = Grid::new(5, 3, 2.0).unwrap();
        assert_eq!(g.x(0), -0.5);
        assert_eq!(g.x(4), 0.5);
        assert_eq!(g.y(0), -2.0);
        assert_eq!(g.y(2), 0.0);
        assert_eq!(g.top_row(), 2);
    }

    #[test]
    fn default_grid_resolution() {
        let g = Grid::default_for(0.01, 1.0, 257).unwrap();
        assert_eq!(g.nx, 2401);
        assert!(g.resolves(0.01));
        let coarse = Grid::new(65, 65, 1.0).unwrap();
        assert!(!coarse.resolves(0.01));
    }

    #[test]
    fn non_finite_rejected() {
        let g = Grid::new(3, 3, 1.0).unwrap();
        let mut xi = vec![0.0; 9];
        xi[4] = f64::INFINITY;
        assert!(DeformationField::from_parts(g, vec![0.0; 9], vec![0.0; 9], xi).is_err());
    }

    #[test]
    fn top_row_mask() {
        let g = Grid::new(4, 3, 1.0).unwrap();
        let m = Mask::top_row(&g);
        assert!(!m.is_fixed(g.idx(2, 1)));
        assert!(m.is_fixed(g.idx(2, 2)));
    }
}
