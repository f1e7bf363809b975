//! Uniform pixel/voxel grids on the unit square or cube.
//!
//! A grid with `N` cells per edge covers `[0, 1]^dim` with interior cells of
//! width `h = 1/N`. One extra layer of cells sits just outside the unit
//! domain; its absorption is zero by definition and it is never stored. Cell
//! centers double as the nodes of the bilinear/trilinear finite-element mesh
//! used by the prior, so the boundary layer provides the homogeneous
//! Dirichlet data.
//!
//! Linear indices run with x fastest: `i = ix + N*iy + N*N*iz`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A point in the domain. Two-dimensional grids leave the last coordinate at 0.
pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells: usize,
}

impl Grid {
    pub fn new(dim: usize, cells: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return invalid(format!("grid dimension must be 2 or 3, got {dim}"));
        }
        if cells == 0 {
            return invalid("grid needs at least one cell per edge");
        }
        Ok(Self { dim, cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior cells per edge (`N`).
    pub fn cells_per_edge(&self) -> usize {
        self.cells
    }

    /// Cells per edge including the zero boundary layer.
    pub fn total_per_edge(&self) -> usize {
        self.cells + 2
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Number of interior unknowns, `N^dim`.
    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lattice coordinates of an interior cell. Unused trailing coordinates are 0.
    #[inline]
    pub fn lattice(&self, index: usize) -> [usize; 3] {
        let n = self.cells;
        match self.dim {
            2 => [index % n, index / n, 0],
            _ => [index % n, (index / n) % n, index / (n * n)],
        }
    }

    #[inline]
    pub fn index(&self, lattice: [usize; 3]) -> usize {
        let n = self.cells;
        lattice[0] + n * lattice[1] + n * n * lattice[2]
    }

    /// Linear index of a possibly out-of-range lattice position, or `None` for
    /// boundary-layer (or farther) cells.
    #[inline]
    pub fn interior_index(&self, lattice: [isize; 3]) -> Option<usize> {
        let n = self.cells as isize;
        for &c in &lattice[..self.dim] {
            if c < 0 || c >= n {
                return None;
            }
        }
        Some(self.index([lattice[0] as usize, lattice[1] as usize, lattice[2] as usize]))
    }

    pub fn cell_center(&self, index: usize) -> Result<Point> {
        if index >= self.len() {
            return invalid(format!(
                "cell index {index} out of range for a grid with {} cells",
                self.len()
            ));
        }
        Ok(self.center_unchecked(index))
    }

    #[inline]
    pub(crate) fn center_unchecked(&self, index: usize) -> Point {
        let h = self.h();
        let l = self.lattice(index);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = (l[a] as f64 + 0.5) * h;
        }
        p
    }

    /// Interior cell containing `p`, if any. Points on a shared face go to the
    /// cell with the larger index.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let mut l = [0isize; 3];
        for a in 0..self.dim {
            if !(0.0..=1.0).contains(&p[a]) {
                return None;
            }
            l[a] = ((p[a] * self.cells as f64).floor() as isize).min(self.cells as isize - 1);
        }
        self.interior_index(l)
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|i| self.center_unchecked(i))
    }
}

/// Absorption values on the interior cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    grid: Grid,
    values: Vec<f64>,
}

impl Image {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!(
                "image has {} values but the grid has {} cells",
                values.len(),
                grid.len()
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = grid.centers().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at a lattice position; the boundary layer and anything beyond
    /// reads as zero.
    #[inline]
    pub fn at(&self, lattice: [isize; 3]) -> f64 {
        self.grid.interior_index(lattice).map_or(0.0, |i| self.values[i])
    }

    /// Evaluates the piecewise bilinear/trilinear interpolant through the cell
    /// centers (boundary layer included) at `p`.
    pub fn interpolate(&self, p: &Point) -> f64 {
        let dim = self.grid.dim;
        let n = self.grid.cells as f64;
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for a in 0..dim {
            // node coordinate: node k sits at (k + 0.5) h
            let xi = (p[a] * n - 0.5).clamp(-1.0, n);
            let mut k = xi.floor();
            let mut t = xi - k;
            if t > 1.0 - 1e-12 {
                k += 1.0;
                t = 0.0;
            } else if t < 1e-12 {
                t = 0.0;
            }
            base[a] = k as isize;
            frac[a] = t;
        }
        let corners = 1usize << dim;
        let mut acc = 0.0;
        for c in 0..corners {
            let mut w = 1.0;
            let mut l = base;
            for a in 0..dim {
                if c >> a & 1 == 1 {
                    w *= frac[a];
                    l[a] += 1;
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * self.at(l);
            }
        }
        acc
    }

    /// Samples the interpolant of `self` at the centers of `coarse`.
    pub fn restrict(&self, coarse: &Grid) -> Result<Image> {
        if coarse.dim != self.grid.dim {
            return invalid(format!(
                "cannot restrict a {}D image onto a {}D grid",
                self.grid.dim, coarse.dim
            ));
        }
        if coarse == &self.grid {
            return Ok(self.clone());
        }
        Ok(Image::from_fn(*coarse, |p| self.interpolate(&p)))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
