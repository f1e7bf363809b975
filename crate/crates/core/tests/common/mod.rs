//! Independent reference implementations shared by the integration tests and
//! the acceptance run. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tvdesign::Grid;

/// Length of the intersection of the line `o + t d` (all real `t`, or
/// `t >= 0` for a half-line) with the unit box, by the slab method.
pub fn chord_length(o: [f64; 3], d: [f64; 3], dim: usize, half_line: bool) -> f64 {
    let (mut lo, mut hi) = (if half_line { 0.0 } else { f64::NEG_INFINITY }, f64::INFINITY);
    for a in 0..dim {
        if d[a] == 0.0 {
            if !(0.0..=1.0).contains(&o[a]) {
                return 0.0;
            }
            continue;
        }
        let t0 = (0.0 - o[a]) / d[a];
        let t1 = (1.0 - o[a]) / d[a];
        lo = lo.max(t0.min(t1));
        hi = hi.min(t0.max(t1));
    }
    let norm = (0..dim).map(|a| d[a] * d[a]).sum::<f64>().sqrt();
    if hi > lo {
        (hi - lo) * norm
    } else {
        0.0
    }
}

fn clip(o: [f64; 3], d: [f64; 3], dim: usize, half_line: bool) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (if half_line { 0.0 } else { f64::NEG_INFINITY }, f64::INFINITY);
    for a in 0..dim {
        if d[a] == 0.0 {
            continue;
        }
        let t0 = -o[a] / d[a];
        let t1 = (1.0 - o[a]) / d[a];
        lo = lo.max(t0.min(t1));
        hi = hi.min(t0.max(t1));
    }
    (hi > lo).then_some((lo, hi))
}

/// Per-cell lengths by midpoint sampling with roughly `ds` spacing.
pub fn sampled_lengths(grid: &Grid, o: [f64; 3], d: [f64; 3], ds: f64, half_line: bool) -> Vec<f64> {
    let dim = grid.dim();
    let mut out = vec![0.0; grid.len()];
    let Some((lo, hi)) = clip(o, d, dim, half_line) else {
        return out;
    };
    let norm = (0..dim).map(|a| d[a] * d[a]).sum::<f64>().sqrt();
    let len = (hi - lo) * norm;
    let steps = (len / ds).ceil().max(1.0) as usize;
    let dt = (hi - lo) / steps as f64;
    let n = grid.cells_per_edge();
    for s in 0..steps {
        let t = lo + (s as f64 + 0.5) * dt;
        let mut lattice = [0usize; 3];
        for a in 0..dim {
            let x = o[a] + t * d[a];
            lattice[a] = ((x * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        }
        out[grid.index(lattice)] += dt * norm;
    }
    out
}

/// A uniformly random line through the unit box (2D or 3D).
pub fn random_line(rng: &mut impl Rng, dim: usize) -> ([f64; 3], [f64; 3]) {
    let mut o = [0.0; 3];
    let mut d = [0.0; 3];
    for a in 0..dim {
        o[a] = rng.random_range(0.0..1.0);
        d[a] = rng.random_range(-1.0..1.0);
    }
    (o, d)
}

/// Smoothed TV of a 2D image written straight from its definition:
/// bilinear interpolation on the mesh of cell centers (zero outside), mean
/// squared gradient per element from 3-point Gauss quadrature, elements
/// weighted by their area inside the unit square.
pub struct DenseTv {
    pub n: usize,
    pub t: f64,
    /// (weight, node indices with `None` for boundary nodes, element matrix)
    elements: Vec<(f64, [Option<usize>; 4], [[f64; 4]; 4])>,
}

impl DenseTv {
    pub fn new(n: usize, t: f64) -> Self {
        let h = 1.0 / n as f64;
        let gauss = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
        // A[a][b] = (1/|e|) ∫_e ∇φ_a·∇φ_b on the reference square scaled by h
        let mut a_ref = [[0.0; 4]; 4];
        for &(xi, wx) in &gauss {
            for &(eta, wy) in &gauss {
                let (s, r) = (0.5 * (xi + 1.0), 0.5 * (eta + 1.0));
                // nodes (0,0), (1,0), (0,1), (1,1); gradients per unit length
                let grads = [[-(1.0 - r), -(1.0 - s)], [1.0 - r, -s], [-r, 1.0 - s], [r, s]];
                let w = 0.25 * wx * wy;
                for a in 0..4 {
                    for b in 0..4 {
                        a_ref[a][b] += w * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]) / (h * h);
                    }
                }
            }
        }
        let ni = n as isize;
        let node = |x: isize, y: isize| -> Option<usize> {
            ((0..ni).contains(&x) && (0..ni).contains(&y)).then(|| (y * ni + x) as usize)
        };
        let mut elements = Vec::new();
        for ky in -1..ni {
            for kx in -1..ni {
                let fx = if kx == -1 || kx == ni - 1 { 0.5 } else { 1.0 };
                let fy = if ky == -1 || ky == ni - 1 { 0.5 } else { 1.0 };
                let nodes = [node(kx, ky), node(kx + 1, ky), node(kx, ky + 1), node(kx + 1, ky + 1)];
                elements.push((fx * fy * h * h, nodes, a_ref));
            }
        }
        Self { n, t, elements }
    }

    fn local(nodes: &[Option<usize>; 4], u: &[f64]) -> [f64; 4] {
        nodes.map(|k| k.map_or(0.0, |i| u[i]))
    }

    fn quad(a: &[[f64; 4]; 4], v: &[f64; 4]) -> (f64, [f64; 4]) {
        let mut av = [0.0; 4];
        for i in 0..4 {
            for j in 0..4 {
                av[i] += a[i][j] * v[j];
            }
        }
        ((0..4).map(|i| v[i] * av[i]).sum(), av)
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.elements
            .iter()
            .map(|(w, nodes, a)| {
                let (q, _) = Self::quad(a, &Self::local(nodes, u));
                w * (q + self.t * self.t).sqrt()
            })
            .sum()
    }

    pub fn gradient(&self, u: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        for (w, nodes, a) in &self.elements {
            let (q, av) = Self::quad(a, &Self::local(nodes, u));
            let phi = (q + self.t * self.t).sqrt();
            for (i, k) in nodes.iter().enumerate() {
                if let Some(k) = k {
                    g[*k] += w * av[i] / phi;
                }
            }
        }
        g
    }

    pub fn hessian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = u.len();
        let mut hm = DMatrix::zeros(n, n);
        for (w, nodes, a) in &self.elements {
            let (q, av) = Self::quad(a, &Self::local(nodes, u));
            let phi = (q + self.t * self.t).sqrt();
            for (i, ki) in nodes.iter().enumerate() {
                let Some(ki) = ki else { continue };
                for (j, kj) in nodes.iter().enumerate() {
                    let Some(kj) = kj else { continue };
                    hm[(*ki, *kj)] += w * (a[i][j] / phi - av[i] * av[j] / (phi * phi * phi));
                }
            }
        }
        hm
    }
}

/// Minimizes `γ Φ(u) + ½ Σ (u_i - y_i)² / σ²` by damped Newton iteration.
pub fn newton_denoise(tv: &DenseTv, y: &[f64], sigma: f64, gamma: f64) -> Vec<f64> {
    let n = y.len();
    let inv_s2 = 1.0 / (sigma * sigma);
    let objective = |u: &[f64]| {
        gamma * tv.value(u) + 0.5 * inv_s2 * u.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    let mut u = y.to_vec();
    for _ in 0..500 {
        let mut g = tv.gradient(&u) * gamma;
        for i in 0..n {
            g[i] += inv_s2 * (u[i] - y[i]);
        }
        if g.norm() < 1e-11 {
            break;
        }
        let mut hm = tv.hessian(&u) * gamma;
        for i in 0..n {
            hm[(i, i)] += inv_s2;
        }
        let step = hm.cholesky().expect("convex objective").solve(&(-&g));
        let f0 = objective(&u);
        let slope = g.dot(&step);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| u[i] + alpha * step[i]).collect();
            if objective(&trial) <= f0 + 1e-4 * alpha * slope || alpha < 1e-12 {
                u = trial;
                break;
            }
            alpha *= 0.5;
        }
    }
    u
}

/// Information-form Gaussian posterior: `Γ = (γ H + Rᵀ Σ⁻¹ R)⁻¹`, mean
/// `Γ Rᵀ Σ⁻¹ y`.
pub fn dense_posterior(
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    variances: &[f64],
    gamma: f64,
    y: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let sinv = DMatrix::from_diagonal(&DVector::from_iterator(variances.len(), variances.iter().map(|v| 1.0 / v)));
    let info = h * gamma + r.transpose() * &sinv * r;
    let cov = info.try_inverse().expect("invertible information matrix");
    let mean = &cov * r.transpose() * &sinv * DVector::from_column_slice(y);
    (mean, cov)
}

/// Explicit `Γ - Γ Rᵀ (R Γ Rᵀ + σ² I)⁻¹ R Γ`.
pub fn dense_update(cov: &DMatrix<f64>, r: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let m = r.nrows();
    let s = r * cov * r.transpose() + DMatrix::identity(m, m) * (sigma * sigma);
    let k = cov * r.transpose() * s.try_inverse().expect("invertible");
    cov - k * r * cov
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

pub fn rel_diff_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
