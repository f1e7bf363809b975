//! Smoothed total-variation prior and its lagged-diffusivity stiffness matrix.
//!
//! Absorption images are identified with their bilinear (2D) or trilinear (3D)
//! interpolant on the dual mesh whose nodes are the cell centers, the zero
//! boundary layer included. Every element of that mesh is an `h`-sized
//! square/cube spanned by `2^dim` neighboring centers.
//!
//! All three quantities below share one quadrature. On element `e` let
//! `g_e² = uᵀ K_e u / |e|` be the mean squared gradient (`K_e` is the exact
//! element stiffness) and let `ω_e = |e ∩ [0,1]^dim|` be the part of the
//! element inside the unit domain. Then
//!
//! * `Φ(u) = Σ_e ω_e √(g_e² + T²)`
//! * `H(w) = Σ_e (ω_e / |e|) ρ(g_e(w)) K_e` with `ρ(v) = 1/√(v² + T²)`
//! * `Φ_w(u) = ½ uᵀH(w)u + ½ wᵀH(w)w + Σ_e ω_e T² ρ(g_e(w))`
//!
//! which makes `∇Φ(u) = H(u) u`, `Φ_w(w) = Φ(w)` and `∇Φ_w(w) = ∇Φ(w)` hold
//! exactly for the discrete functionals.

use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, Image};
use crate::linalg::{BandCholesky, SymBand};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvParams {
    /// Smoothing parameter `T` of `φ(t) = √(t² + T²)`.
    pub t: f64,
    /// Prior weight `γ`.
    pub gamma: f64,
}

impl TvParams {
    pub fn new(t: f64, gamma: f64) -> Result<Self> {
        let p = Self { t, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return invalid(format!("smoothing parameter T must be positive, got {}", self.t));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return invalid(format!("prior weight γ must be positive, got {}", self.gamma));
        }
        Ok(())
    }
}

impl Default for TvParams {
    fn default() -> Self {
        Self { t: 1e-6, gamma: 1e-2 }
    }
}

/// Stiffness matrix of the unit square/cube element with multilinear shape
/// functions. Local node `b` sits at corner `(b & 1, b >> 1 & 1, b >> 2 & 1)`.
fn reference_stiffness(dim: usize) -> Vec<f64> {
    let nodes = 1usize << dim;
    let g = 0.5 / 3f64.sqrt();
    let gauss = [0.5 - g, 0.5 + g];
    let points = 1usize << dim;
    let mut k = vec![0.0; nodes * nodes];
    for q in 0..points {
        let xi: Vec<f64> = (0..dim).map(|a| gauss[q >> a & 1]).collect();
        let weight = 0.5f64.powi(dim as i32);
        let grads: Vec<Vec<f64>> = (0..nodes)
            .map(|b| {
                (0..dim)
                    .map(|c| {
                        let mut v = 1.0;
                        for a in 0..dim {
                            let bit = b >> a & 1 == 1;
                            v *= if a == c {
                                if bit { 1.0 } else { -1.0 }
                            } else if bit {
                                xi[a]
                            } else {
                                1.0 - xi[a]
                            };
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        for i in 0..nodes {
            for j in 0..nodes {
                let d: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum();
                k[i * nodes + j] += weight * d;
            }
        }
    }
    k
}

/// One element of the dual mesh: its (interior) nodes and `ω_e / |e|`.
struct Element {
    nodes: [Option<usize>; 8],
    scale: f64,
}

struct Mesh {
    dim: usize,
    local: usize,
    /// `K_e = h^(dim-2) * K_ref`, row-major.
    k_elem: Vec<f64>,
    volume: f64,
}

impl Mesh {
    fn new(grid: &Grid) -> Self {
        let dim = grid.dim();
        let h = grid.h();
        let k_elem = reference_stiffness(dim).into_iter().map(|v| v * h.powi(dim as i32 - 2)).collect();
        Self { dim, local: 1 << dim, k_elem, volume: h.powi(dim as i32) }
    }

    /// Visits every element; lower corners range over `[-1, N-1]^dim`.
    fn for_each(&self, grid: &Grid, mut f: impl FnMut(&Element)) {
        let n = grid.cells_per_edge() as isize;
        let dim = self.dim;
        let count = (n + 1).pow(dim as u32);
        let axis_factor = |c: isize| if c == -1 || c == n - 1 { 0.5 } else { 1.0 };
        for flat in 0..count {
            let mut corner = [0isize; 3];
            let mut rest = flat;
            for c in corner.iter_mut().take(dim) {
                *c = rest % (n + 1) - 1;
                rest /= n + 1;
            }
            let mut scale = 1.0;
            for &c in corner.iter().take(dim) {
                scale *= axis_factor(c);
            }
            let mut nodes = [None; 8];
            for (b, node) in nodes.iter_mut().enumerate().take(self.local) {
                let mut l = corner;
                for (a, la) in l.iter_mut().enumerate().take(dim) {
                    *la += (b >> a & 1) as isize;
                }
                *node = grid.interior_index(l);
            }
            f(&Element { nodes, scale });
        }
    }

    /// `uᵀ K_e u` for one element.
    #[inline]
    fn energy(&self, e: &Element, u: &[f64]) -> f64 {
        let mut vals = [0.0; 8];
        for b in 0..self.local {
            vals[b] = e.nodes[b].map_or(0.0, |i| u[i]);
        }
        let mut q = 0.0;
        for a in 0..self.local {
            if vals[a] == 0.0 {
                continue;
            }
            let row = &self.k_elem[a * self.local..(a + 1) * self.local];
            let mut s = 0.0;
            for b in 0..self.local {
                s += row[b] * vals[b];
            }
            q += vals[a] * s;
        }
        q.max(0.0)
    }
}

/// Sparse symmetric matrix with the 3^dim-point lattice stencil of the
/// multilinear elements.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    grid: Grid,
    /// `stencil[i * width + s]` holds `H(i, i + offset(s))`.
    stencil: Vec<f64>,
    width: usize,
    source_hash: u64,
}

impl StiffnessMatrix {
    fn zeros(grid: &Grid, source_hash: u64) -> Self {
        let width = 3usize.pow(grid.dim() as u32);
        Self { grid: *grid, stencil: vec![0.0; grid.len() * width], width, source_hash }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.grid.len()
    }

    /// Hash of the image the coefficient was computed from.
    pub fn source_hash(&self) -> u64 {
        self.source_hash
    }

    #[inline]
    fn stencil_slot(&self, i: usize, j: usize) -> usize {
        let li = self.grid.lattice(i);
        let lj = self.grid.lattice(j);
        let mut s = 0;
        let mut pow = 1;
        for a in 0..self.grid.dim() {
            let d = lj[a] as isize - li[a] as isize;
            debug_assert!(d.abs() <= 1);
            s += (d + 1) as usize * pow;
            pow *= 3;
        }
        i * self.width + s
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.stencil_slot(i, j);
        self.stencil[s] += v;
    }

    /// Stencil offsets as lattice displacements, in storage order.
    fn offsets(&self) -> Vec<[isize; 3]> {
        let dim = self.grid.dim();
        (0..self.width)
            .map(|s| {
                let mut o = [0isize; 3];
                let mut rest = s;
                for oa in o.iter_mut().take(dim) {
                    *oa = (rest % 3) as isize - 1;
                    rest /= 3;
                }
                o
            })
            .collect()
    }

    /// Visits the stored nonzeros `(i, j, value)`.
    pub fn for_each_entry(&self, mut f: impl FnMut(usize, usize, f64)) {
        let offsets = self.offsets();
        for i in 0..self.order() {
            let l = self.grid.lattice(i);
            for (s, o) in offsets.iter().enumerate() {
                let v = self.stencil[i * self.width + s];
                if v == 0.0 {
                    continue;
                }
                let lj = [l[0] as isize + o[0], l[1] as isize + o[1], l[2] as isize + o[2]];
                if let Some(j) = self.grid.interior_index(lj) {
                    f(i, j, v);
                }
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (li, lj) = (self.grid.lattice(i), self.grid.lattice(j));
        if (0..self.grid.dim()).any(|a| li[a].abs_diff(lj[a]) > 1) {
            return 0.0;
        }
        self.stencil[self.stencil_slot(i, j)]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.order()];
        self.for_each_entry(|i, j, v| out[i] += v * x[j]);
        out
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        self.for_each_entry(|i, j, v| t.push((i, j, v)));
        t
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.order(), self.order());
        self.for_each_entry(|i, j, v| d[(i, j)] = v);
        d
    }

    /// Half bandwidth under x-fastest numbering.
    pub fn half_bandwidth(&self) -> usize {
        let n = self.grid.cells_per_edge();
        match self.grid.dim() {
            2 => n + 1,
            _ => n * n + n + 1,
        }
    }

    pub fn to_band(&self) -> SymBand {
        let mut band = SymBand::zeros(self.order(), self.half_bandwidth());
        self.for_each_entry(|i, j, v| {
            if j <= i {
                band.add(i, j, v);
            }
        });
        band
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        self.to_band().cholesky()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.stencil.iter_mut().for_each(|v| *v *= c);
        m
    }

    /// Sum of `self` and `c * other` on the same grid.
    pub fn plus_scaled(&self, c: f64, other: &StiffnessMatrix) -> Result<Self> {
        if self.grid != other.grid {
            return invalid("stiffness matrices live on different grids");
        }
        let mut m = self.clone();
        for (a, b) in m.stencil.iter_mut().zip(&other.stencil) {
            *a += c * b;
        }
        Ok(m)
    }
}

fn image_hash(u: &Image) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    u.grid().hash(&mut h);
    for v in u.values() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("smoothing parameter T must be positive, got {t}"));
    }
    Ok(())
}

/// Discrete smoothed total variation `Φ(u)`.
pub fn tv_value(u: &Image, t: f64) -> Result<f64> {
    check_t(t)?;
    let grid = *u.grid();
    let mesh = Mesh::new(&grid);
    let mut total = 0.0;
    let t2 = t * t;
    mesh.for_each(&grid, |e| {
        let g2 = mesh.energy(e, u.values()) / mesh.volume;
        total += e.scale * mesh.volume * (g2 + t2).sqrt();
    });
    Ok(total)
}

/// Lagged-diffusivity stiffness matrix `H(w)`.
pub fn stiffness(w: &Image, t: f64) -> Result<StiffnessMatrix> {
    check_t(t)?;
    let grid = *w.grid();
    let mesh = Mesh::new(&grid);
    let mut h = StiffnessMatrix::zeros(&grid, image_hash(w));
    let t2 = t * t;
    mesh.for_each(&grid, |e| {
        let g2 = mesh.energy(e, w.values()) / mesh.volume;
        let coeff = e.scale / (g2 + t2).sqrt();
        add_element(&mut h, &mesh, e, coeff);
    });
    Ok(h)
}

/// Constant-coefficient Dirichlet stiffness matrix (coefficient 1).
pub fn laplacian(grid: &Grid) -> StiffnessMatrix {
    let mesh = Mesh::new(grid);
    let mut h = StiffnessMatrix::zeros(grid, 0);
    mesh.for_each(grid, |e| add_element(&mut h, &mesh, e, e.scale));
    h
}

fn add_element(h: &mut StiffnessMatrix, mesh: &Mesh, e: &Element, coeff: f64) {
    for a in 0..mesh.local {
        let Some(i) = e.nodes[a] else { continue };
        for b in 0..mesh.local {
            let Some(j) = e.nodes[b] else { continue };
            h.add(i, j, coeff * mesh.k_elem[a * mesh.local + b]);
        }
    }
}

/// Quadratic surrogate `Φ_w(u)` of the TV functional, tangent at `w`.
pub fn surrogate_value(u: &Image, w: &Image, t: f64) -> Result<f64> {
    if u.grid() != w.grid() {
        return invalid("surrogate arguments live on different grids");
    }
    let h = stiffness(w, t)?;
    let grid = *w.grid();
    let mesh = Mesh::new(&grid);
    let t2 = t * t;
    let mut constant = 0.0;
    mesh.for_each(&grid, |e| {
        let g2 = mesh.energy(e, w.values()) / mesh.volume;
        constant += e.scale * mesh.volume * t2 / (g2 + t2).sqrt();
    });
    Ok(0.5 * h.quadratic_form(u.values()) + 0.5 * h.quadratic_form(w.values()) + constant)
}

/// Squared-exponential covariance `η² exp(-|x_i - x_j|² / (2ℓ²))` over the
/// cell centers.
pub fn gaussian_cov(grid: &Grid, eta: f64, ell: f64) -> Result<DMatrix<f64>> {
    if !(eta > 0.0) || !(ell > 0.0) {
        return invalid(format!("η and ℓ must be positive, got {eta} and {ell}"));
    }
    let centers: Vec<_> = grid.centers().collect();
    let n = centers.len();
    let eta2 = eta * eta;
    let denom = 2.0 * ell * ell;
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let d2: f64 = (0..3).map(|a| (centers[i][a] - centers[j][a]).powi(2)).sum();
            let v = eta2 * (-d2 / denom).exp();
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_stiffness_2d() {
        let k = reference_stiffness(2);
        let expect = [
            [4.0, -1.0, -1.0, -2.0],
            [-1.0, 4.0, -2.0, -1.0],
            [-1.0, -2.0, 4.0, -1.0],
            [-2.0, -1.0, -1.0, 4.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((k[i * 4 + j] - expect[i][j] / 6.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reference_stiffness_rows_sum_to_zero() {
        let k = reference_stiffness(3);
        for i in 0..8 {
            let s: f64 = k[i * 8..(i + 1) * 8].iter().sum();
            assert!(s.abs() < 1e-14);
        }
        assert!((k[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn tv_of_zero_is_t() {
        for dim in [2, 3] {
            let g = Grid::new(dim, 5).unwrap();
            let z = Image::zeros(g);
            assert!((tv_value(&z, 0.3).unwrap() - 0.3).abs() < 1e-14);
        }
        let z = Image::zeros(Grid::new(2, 100).unwrap());
        assert!((tv_value(&z, 1e-6).unwrap() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn zero_image_gives_scaled_laplacian() {
        let g = Grid::new(2, 6).unwrap();
        let t = 1e-3;
        let h = stiffness(&Image::zeros(g), t).unwrap();
        let l = laplacian(&g);
        for (i, j, v) in l.triplets() {
            assert!((h.get(i, j) - v / t).abs() <= 1e-12 * (v / t).abs());
        }
        assert_eq!(h.triplets().len(), l.triplets().len());
    }

    #[test]
    fn rejects_nonpositive_t() {
        let z = Image::zeros(Grid::new(2, 3).unwrap());
        assert!(tv_value(&z, 0.0).is_err());
        assert!(stiffness(&z, -1.0).is_err());
        assert!(TvParams::new(1e-6, 0.0).is_err());
    }

    #[test]
    fn gaussian_cov_entries() {
        let g = Grid::new(2, 10).unwrap();
        let c = gaussian_cov(&g, 0.2, 0.1).unwrap();
        assert!((c[(0, 0)] - 0.04).abs() < 1e-15);
        // neighbors along x are exactly ℓ = 0.1 apart
        assert!((c[(0, 1)] - 0.04 * (-0.5f64).exp()).abs() < 1e-15);
        assert!(gaussian_cov(&g, 0.0, 0.1).is_err());
    }

    #[test]
    fn stencil_dense_roundtrip() {
        let g = Grid::new(3, 3).unwrap();
        let w = Image::from_fn(g, |p| p[0] * p[1] + p[2]);
        let h = stiffness(&w, 0.1).unwrap();
        let d = h.to_dense();
        let x: Vec<f64> = (0..g.len()).map(|i| (i as f64).sin()).collect();
        let hx = h.matvec(&x);
        let dx = &d * nalgebra::DVector::from_vec(x);
        for i in 0..g.len() {
            assert!((hx[i] - dx[i]).abs() < 1e-12);
        }
        assert_eq!(d, d.transpose());
    }
}
