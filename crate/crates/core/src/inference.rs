//! Gaussian approximations of the TV posterior via lagged diffusivity.
//!
//! With the prior frozen at `Γ = H(w)⁻¹` the posterior is Gaussian with mean
//! `Γ Rᵀ (R Γ Rᵀ + γ Σ)⁻¹ y` and covariance
//! `γ⁻¹ (Γ - Γ Rᵀ (R Γ Rᵀ + γ Σ)⁻¹ R Γ)`, where `R` and `y` stack every
//! projection taken so far and `Σ` is the (diagonal) noise covariance. Only
//! the km × km system is ever factored densely; `H` goes through a band
//! Cholesky factorization.

use std::io::Write;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::Image;
use crate::linalg::{dense_cholesky, symmetrize, BandCholesky, CsrMatrix};
use crate::prior::{stiffness, tv_value, StiffnessMatrix, TvParams};
use crate::projector::ProjectionMatrix;

/// Default order above which dense covariances are refused.
pub const DEFAULT_DENSE_CAP: usize = 5000;

/// Default cap on lagged-diffusivity iterations.
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

/// All projections taken so far, their data and per-projection noise levels.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    n: usize,
    matrix: CsrMatrix,
    data: Vec<f64>,
    /// Noise variance per row.
    variances: Vec<f64>,
    blocks: Vec<usize>,
}

impl StackedSystem {
    pub fn new(n: usize) -> Self {
        Self { n, matrix: CsrMatrix::empty(n), data: Vec::new(), variances: Vec::new(), blocks: Vec::new() }
    }

    /// Appends one projection with its data and noise standard deviation.
    pub fn push(&mut self, r: &ProjectionMatrix, data: &[f64], sigma: f64) -> Result<()> {
        if r.ncols() != self.n {
            return invalid(format!("projection has {} columns, system has {}", r.ncols(), self.n));
        }
        if r.nrows() != data.len() {
            return invalid(format!("projection has {} rays but {} data values", r.nrows(), data.len()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return invalid(format!("noise standard deviation must be positive, got {sigma}"));
        }
        self.matrix.vstack(r)?;
        self.data.extend_from_slice(data);
        self.variances.extend(std::iter::repeat_n(sigma * sigma, r.nrows()));
        self.blocks.push(r.nrows());
        Ok(())
    }

    pub fn unknowns(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.data.len()
    }

    pub fn projections(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

/// Mean and covariance of an approximate Gaussian posterior.
#[derive(Debug, Clone)]
pub struct GaussianState {
    pub mean: Image,
    pub covariance: DMatrix<f64>,
    pub round: usize,
}

/// `L⁻¹ Rᵀ` for the band factor `L` of `H`, returned transposed (km × n).
/// Rays are processed in blocks sorted by their first touched cell so the
/// forward substitution can skip the leading zero rows.
fn whitened_rows(chol: &BandCholesky, r: &CsrMatrix) -> DMatrix<f64> {
    const BLOCK: usize = 32;
    let n = chol.order();
    let km = r.nrows();
    let mut order: Vec<usize> = (0..km).collect();
    order.sort_by_key(|&c| (r.row_first_col(c).unwrap_or(n), c));

    let solved: Vec<(usize, Vec<f64>)> = order
        .par_chunks(BLOCK)
        .map(|rows| {
            let w = rows.len();
            let start = rows.iter().filter_map(|&c| r.row_first_col(c)).min().unwrap_or(n);
            let mut buf = vec![0.0; n * w];
            for (k, &c) in rows.iter().enumerate() {
                let (cols, vals) = r.row(c);
                for (&j, &v) in cols.iter().zip(vals) {
                    buf[j * w + k] = v;
                }
            }
            if start < n {
                chol.forward_block(&mut buf, w, start);
            }
            (start, buf)
        })
        .collect();

    let mut wt = DMatrix::<f64>::zeros(km, n);
    let slice = wt.as_mut_slice();
    for (chunk, (start, buf)) in order.chunks(BLOCK).zip(&solved) {
        let w = chunk.len();
        for i in *start..n {
            let src = &buf[i * w..(i + 1) * w];
            for (k, &c) in chunk.iter().enumerate() {
                slice[i * km + c] = src[k];
            }
        }
    }
    wt
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return invalid(format!("prior weight γ must be positive, got {gamma}"));
    }
    Ok(())
}

/// Posterior mean `H⁻¹ Rᵀ (R H⁻¹ Rᵀ + γ Σ)⁻¹ y`.
pub fn posterior_mean(h: &StiffnessMatrix, sys: &StackedSystem, gamma: f64) -> Result<Image> {
    check_gamma(gamma)?;
    if sys.is_empty() {
        return invalid("posterior mean needs at least one projection");
    }
    if sys.unknowns() != h.order() {
        return invalid("stiffness matrix and projections disagree on the number of unknowns");
    }
    let chol = h.cholesky()?;
    posterior_mean_factored(&chol, h, sys, gamma)
}

fn posterior_mean_factored(
    chol: &BandCholesky,
    h: &StiffnessMatrix,
    sys: &StackedSystem,
    gamma: f64,
) -> Result<Image> {
    let wt = whitened_rows(chol, sys.matrix());
    let mut s = &wt * wt.transpose();
    for (i, v) in sys.variances().iter().enumerate() {
        s[(i, i)] += gamma * v;
    }
    let s = dense_cholesky(s, "data-space system")?;
    let c = s.solve(&DVector::from_column_slice(sys.data()));
    let mut u: Vec<f64> = wt.tr_mul(&c).as_slice().to_vec();
    chol.backward_block(&mut u, 1);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("posterior mean is not finite".into()));
    }
    Image::new(*h.grid(), u)
}

/// Dense posterior covariance `(γ H + Rᵀ Σ⁻¹ R)⁻¹`, computed in the
/// Woodbury form. Refuses matrices of order above `cap`.
pub fn posterior_cov(h: &StiffnessMatrix, sys: &StackedSystem, gamma: f64, cap: usize) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    let n = h.order();
    if n > cap {
        return Err(Error::Capacity { n, cap });
    }
    if sys.unknowns() != n {
        return invalid("stiffness matrix and projections disagree on the number of unknowns");
    }
    let chol = h.cholesky()?;
    let mut cov = chol.inverse();
    if !sys.is_empty() {
        // Zᵀ = R H⁻¹ (km × n), S = R Z + γ Σ
        let zt = sys.matrix().mul_dense(&cov);
        let mut s = sys.matrix().mul_dense(&zt.transpose());
        for (i, v) in sys.variances().iter().enumerate() {
            s[(i, i)] += gamma * v;
        }
        symmetrize(&mut s);
        let s = dense_cholesky(s, "data-space system")?;
        let mut y = zt;
        s.l().solve_lower_triangular_mut(&mut y);
        cov -= y.transpose() * &y;
    }
    cov /= gamma;
    symmetrize(&mut cov);
    Ok(cov)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub j: usize,
    pub phi: f64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct LaggedOptions {
    pub max_iterations: usize,
}

impl Default for LaggedOptions {
    fn default() -> Self {
        Self { max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

#[derive(Debug, Clone)]
pub struct LaggedOutcome {
    /// Accepted iterate `u^(J)`.
    pub mean: Image,
    /// `H(u^(J-1))`, the stiffness matrix that produced the accepted mean.
    pub stiffness: StiffnessMatrix,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl LaggedOutcome {
    pub fn write_diagnostics(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "j,phi,delta_phi")?;
        for r in &self.history {
            writeln!(out, "{},{:e},{:e}", r.j, r.phi, r.delta)?;
        }
        Ok(())
    }
}

pub fn lagged_diffusivity(
    u_init: &Image,
    sys: &StackedSystem,
    params: &TvParams,
    tau: f64,
) -> Result<LaggedOutcome> {
    lagged_diffusivity_with(u_init, sys, params, tau, &LaggedOptions::default())
}

/// Lagged-diffusivity iteration: `u^(j)` is the posterior mean under the
/// prior `H(u^(j-1))`, repeated until the relative change of `Φ` drops to
/// `tau` or below.
pub fn lagged_diffusivity_with(
    u_init: &Image,
    sys: &StackedSystem,
    params: &TvParams,
    tau: f64,
    opts: &LaggedOptions,
) -> Result<LaggedOutcome> {
    params.validate()?;
    if !(tau > 0.0) {
        return invalid(format!("tolerance τ must be positive, got {tau}"));
    }
    if sys.is_empty() {
        return invalid("lagged diffusivity needs at least one projection");
    }
    let mut u = u_init.clone();
    let mut phi_prev = tv_value(&u, params.t)?;
    let mut history = Vec::new();
    let mut last_delta = f64::INFINITY;
    for j in 1..=opts.max_iterations {
        let h = stiffness(&u, params.t)?;
        let chol = h.cholesky()?;
        let next = posterior_mean_factored(&chol, &h, sys, params.gamma)?;
        let phi = tv_value(&next, params.t)?;
        let delta = (phi_prev - phi).abs() / phi;
        if j > 1 && phi > phi_prev {
            warn!("TV functional increased at lagged-diffusivity iteration {j}: {phi_prev:e} -> {phi:e}");
        }
        debug!("lagged diffusivity j={j} phi={phi:e} delta={delta:e}");
        history.push(IterationRecord { j, phi, delta });
        u = next;
        phi_prev = phi;
        last_delta = delta;
        if delta <= tau {
            return Ok(LaggedOutcome { mean: u, stiffness: h, iterations: j, history });
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: opts.max_iterations,
        last_change: last_delta,
        last: Box::new(u),
    })
}

/// Lagged diffusivity started from the all-ones image.
pub fn reference_reconstruction(sys: &StackedSystem, grid: &crate::grid::Grid, params: &TvParams, tau: f64) -> Result<LaggedOutcome> {
    lagged_diffusivity(&Image::constant(*grid, 1.0), sys, params, tau)
}
