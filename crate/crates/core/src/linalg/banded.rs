//! Symmetric positive definite band matrices and their Cholesky factors.
//!
//! Stiffness matrices on lattice grids with x-fastest numbering have a half
//! bandwidth of `N + 1` (2D) or `N^2 + N + 1` (3D), so a band factorization
//! is both simple and fast enough for the grids used here.
//!
//! Storage is row-major over the lower band: row `i` keeps columns
//! `i - bw ..= i` at offsets `0 ..= bw`. Slots left of column 0 are zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` at `(i, j)` and, implicitly, `(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn cholesky(self) -> Result<BandCholesky> {
        BandCholesky::factor(self)
    }
}

/// Lower-triangular band factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let mut acc = [0.0f64; 4];
    let chunks = len / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..len {
        s += a[k] * b[k];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `C += alpha · A · B` for strided row-major or column-major operands.
/// Panics if any operand extent exceeds its slice.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above keep every accessed element inside its slice,
    // and `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Panel width of the blocked factorization and solves.
const NB: usize = 64;

impl BandCholesky {
    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Right-looking blocked factorization: each panel of `NB` columns is
    /// factored densely, then the trailing band is updated with one matrix
    /// product.
    fn factor(a: SymBand) -> Result<Self> {
        let SymBand { n, bw, mut data } = a;
        let w = bw + 1;
        let slot = |i: usize, j: usize| i * w + (j + bw - i);
        let mut panel = Vec::new();
        let mut t = Vec::new();
        let mut s = 0;
        while s < n {
            let pe = (s + NB).min(n);
            let pb = pe - s;
            let re = (pe + bw).min(n);
            let rows = re - s;
            panel.clear();
            panel.resize(rows * pb, 0.0);
            for i in s..re {
                let lo = i.saturating_sub(bw).max(s);
                let hi = pe.min(i + 1);
                if lo < hi {
                    panel[(i - s) * pb + (lo - s)..(i - s) * pb + (hi - s)]
                        .copy_from_slice(&data[slot(i, lo)..slot(i, lo) + (hi - lo)]);
                }
            }
            for i in 0..rows {
                for j in 0..pb.min(i + 1) {
                    let acc = dot(&panel[i * pb..i * pb + j], &panel[j * pb..j * pb + j]);
                    let v = panel[i * pb + j] - acc;
                    if i == j {
                        if !(v > 0.0) || !v.is_finite() {
                            return Err(Error::NumericalFailure(format!(
                                "matrix is not positive definite (pivot {v:e} at row {})",
                                s + i
                            )));
                        }
                        panel[i * pb + j] = v.sqrt();
                    } else {
                        panel[i * pb + j] = v / panel[j * pb + j];
                    }
                }
            }
            for i in s..re {
                let lo = i.saturating_sub(bw).max(s);
                let hi = pe.min(i + 1);
                if lo < hi {
                    data[slot(i, lo)..slot(i, lo) + (hi - lo)]
                        .copy_from_slice(&panel[(i - s) * pb + (lo - s)..(i - s) * pb + (hi - s)]);
                }
            }
            // A22 -= L21 L21ᵀ, lower part only, in row chunks
            let kk = re - pe;
            if kk > 0 {
                let l21 = &panel[pb * pb..];
                t.clear();
                t.resize(kk * kk, 0.0);
                let mut c = 0;
                while c < kk {
                    let ce = (c + 2 * NB).min(kk);
                    gemm(ce - c, pb, ce, 1.0, &l21[c * pb..], (pb, 1), l21, (1, pb), &mut t[c * kk..], (kk, 1));
                    c = ce;
                }
                for i in 0..kk {
                    let row = pe + i;
                    let j0 = row.saturating_sub(bw).max(pe) - pe;
                    let base = slot(row, pe + j0);
                    for (d, v) in data[base..base + (i + 1 - j0)].iter_mut().zip(&t[i * kk + j0..i * kk + i + 1]) {
                        *d -= v;
                    }
                }
            }
            s = pe;
        }
        Ok(Self { n, bw, data })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    fn diag(&self, i: usize) -> f64 {
        self.data[i * (self.bw + 1) + self.bw]
    }

    /// Row `i` of `L` restricted to columns `k0..i` together with `k0`.
    #[inline]
    fn row_below_diag(&self, i: usize) -> (usize, &[f64]) {
        let k0 = i.saturating_sub(self.bw);
        let start = i * (self.bw + 1) + (k0 + self.bw - i);
        (k0, &self.data[start..start + (i - k0)])
    }

    /// Solves `L Y = B` in place for `r` right-hand sides stored row-major
    /// (`x[i * r + c]`). Rows before `start` must be zero in every column.
    pub fn forward_block(&self, x: &mut [f64], r: usize, start: usize) {
        debug_assert_eq!(x.len(), self.n * r);
        let bw = self.bw;
        let mut acc = vec![0.0; r];
        let mut tmp = Vec::new();
        let mut s = start;
        while s < self.n {
            let e = (s + NB).min(self.n);
            // contribution of already solved rows lo..s
            let lo = s.saturating_sub(bw).max(start);
            if lo < s {
                let kc = s - lo;
                tmp.clear();
                tmp.resize((e - s) * kc, 0.0);
                for i in s..e {
                    let j0 = i.saturating_sub(bw).max(lo);
                    if j0 < s {
                        let base = self.slot(i, j0);
                        tmp[(i - s) * kc + (j0 - lo)..(i - s + 1) * kc].copy_from_slice(&self.data[base..base + (s - j0)]);
                    }
                }
                let (done, rest) = x.split_at_mut(s * r);
                gemm(e - s, kc, r, -1.0, &tmp, (kc, 1), &done[lo * r..], (r, 1), &mut rest[..(e - s) * r], (r, 1));
            }
            for i in s..e {
                let k0 = i.saturating_sub(bw).max(s);
                let base = self.slot(i, k0);
                acc.copy_from_slice(&x[i * r..(i + 1) * r]);
                for (off, &l) in self.data[base..base + (i - k0)].iter().enumerate() {
                    if l != 0.0 {
                        let k = k0 + off;
                        axpy(-l, &x[k * r..(k + 1) * r], &mut acc);
                    }
                }
                let d = 1.0 / self.diag(i);
                for (dst, a) in x[i * r..(i + 1) * r].iter_mut().zip(&acc) {
                    *dst = a * d;
                }
            }
            s = e;
        }
    }

    /// Solves `Lᵀ X = Y` in place for `r` right-hand sides stored row-major.
    pub fn backward_block(&self, x: &mut [f64], r: usize) {
        debug_assert_eq!(x.len(), self.n * r);
        let mut xi = vec![0.0; r];
        for i in (0..self.n).rev() {
            let d = 1.0 / self.diag(i);
            for c in 0..r {
                x[i * r + c] *= d;
            }
            xi.copy_from_slice(&x[i * r..(i + 1) * r]);
            let (k0, row) = self.row_below_diag(i);
            for (off, &l) in row.iter().enumerate() {
                if l != 0.0 {
                    let k = k0 + off;
                    axpy(-l, &xi, &mut x[k * r..(k + 1) * r]);
                }
            }
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_block(b, 1, 0);
        self.backward_block(b, 1);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Dense inverse, assembled block by block from unit vectors.
    pub fn inverse(&self) -> DMatrix<f64> {
        const BLOCK: usize = 32;
        let n = self.n;
        let mut inv = DMatrix::<f64>::zeros(n, n);
        let mut buf = Vec::new();
        let mut c0 = 0;
        while c0 < n {
            let r = BLOCK.min(n - c0);
            buf.clear();
            buf.resize(n * r, 0.0);
            for c in 0..r {
                buf[(c0 + c) * r + c] = 1.0;
            }
            self.forward_block(&mut buf, r, c0);
            self.backward_block(&mut buf, r);
            for c in 0..r {
                let mut col = inv.column_mut(c0 + c);
                for i in 0..n {
                    col[i] = buf[i * r + c];
                }
            }
            c0 += r;
        }
        // symmetrize away rounding noise
        for j in 0..n {
            for i in j + 1..n {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.diag(i).ln()).sum()
    }
}
