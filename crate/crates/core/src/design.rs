//! A-optimal selection of the next projection geometry.
//!
//! For a candidate `R = R(p)` the updated covariance is
//! `Γ - Γ Rᵀ (R Γ Rᵀ + σ² I)⁻¹ R Γ` and its weighted trace equals
//! `tr(A Γ Aᵀ) - ‖L⁻¹ R Γ Aᵀ‖²_F` with `L Lᵀ = R Γ Rᵀ + σ² I`, so candidates
//! are scored without forming the updated matrix. Scoring happens on the
//! (usually coarser) design grid.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, Image};
use crate::inference::{posterior_cov, StackedSystem};
use crate::linalg::{dense_cholesky, symmetrize};
use crate::prior::{stiffness, TvParams};
use crate::projector::{Design, DesignSpaceConfig, ProjectionMatrix};

/// Diagonal weight `A` of the A-optimality criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    #[default]
    Identity,
    /// `A = diag(a)`, e.g. a 0/1 region-of-interest mask.
    Diagonal(Vec<f64>),
}

impl Weight {
    fn check(&self, n: usize) -> Result<()> {
        match self {
            Weight::Identity => Ok(()),
            Weight::Diagonal(a) if a.len() == n => Ok(()),
            Weight::Diagonal(a) => invalid(format!("weight has {} entries, covariance has order {n}", a.len())),
        }
    }

    #[inline]
    fn at(&self, i: usize) -> f64 {
        match self {
            Weight::Identity => 1.0,
            Weight::Diagonal(a) => a[i],
        }
    }

    /// `tr(A Γ Aᵀ)`.
    pub fn trace(&self, cov: &DMatrix<f64>) -> f64 {
        (0..cov.nrows()).map(|i| self.at(i).powi(2) * cov[(i, i)]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignScore {
    pub index: usize,
    pub trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub design: Design,
    pub score: f64,
}

/// `Γ Rᵀ` as an n × m matrix; `cov` must be symmetric.
fn cov_times_rt(cov: &DMatrix<f64>, r: &ProjectionMatrix) -> DMatrix<f64> {
    let n = cov.nrows();
    let m = r.nrows();
    let mut out = DMatrix::<f64>::zeros(n, m);
    for a in 0..m {
        let (cols, vals) = r.row(a);
        let mut dst = out.column_mut(a);
        for (&i, &v) in cols.iter().zip(vals) {
            dst.axpy(v, &cov.column(i), 1.0);
        }
    }
    out
}

fn check_inputs(cov: &DMatrix<f64>, r: &ProjectionMatrix, sigma: f64) -> Result<()> {
    if cov.nrows() != cov.ncols() {
        return invalid("covariance must be square");
    }
    if r.ncols() != cov.nrows() {
        return invalid(format!(
            "projection has {} columns, covariance has order {}",
            r.ncols(),
            cov.nrows()
        ));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return invalid(format!("noise standard deviation must be positive, got {sigma}"));
    }
    Ok(())
}

/// Weighted trace of the covariance after adding projection `r`.
pub fn a_value(cov: &DMatrix<f64>, r: &ProjectionMatrix, sigma: f64, weight: &Weight) -> Result<f64> {
    check_inputs(cov, r, sigma)?;
    weight.check(cov.nrows())?;
    Ok(weight.trace(cov) - information_gain(cov, r, sigma, weight)?)
}

/// `‖L⁻¹ R Γ Aᵀ‖²_F`, the trace reduction due to projection `r`.
fn information_gain(cov: &DMatrix<f64>, r: &ProjectionMatrix, sigma: f64, weight: &Weight) -> Result<f64> {
    let m = r.nrows();
    if m == 0 {
        return Ok(0.0);
    }
    let grt = cov_times_rt(cov, r);
    let mut s = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        let (cols, vals) = r.row(a);
        for b in 0..m {
            let col = grt.column(b);
            s[(a, b)] = cols.iter().zip(vals).map(|(&i, &v)| v * col[i]).sum();
        }
    }
    symmetrize(&mut s);
    let sigma2 = sigma * sigma;
    for a in 0..m {
        s[(a, a)] += sigma2;
    }
    let chol = dense_cholesky(s, "projected covariance")?;
    // rows of (R Γ Aᵀ) are the columns of Γ Rᵀ scaled by the weight
    let mut x = grt.transpose();
    if let Weight::Diagonal(w) = weight {
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= w[j];
        }
    }
    chol.l().solve_lower_triangular_mut(&mut x);
    let gain = x.norm_squared();
    if !gain.is_finite() {
        return Err(Error::NumericalFailure("non-finite design score".into()));
    }
    Ok(gain)
}

/// Candidate geometries with their projection matrices on the design grid.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub grid: Grid,
    pub designs: Vec<Design>,
    pub matrices: Vec<ProjectionMatrix>,
}

impl CandidateSet {
    pub fn build(space: &DesignSpaceConfig, grid: &Grid) -> Result<Self> {
        let designs = space.enumerate();
        let matrices = crate::projector::assemble_all(space, grid, &designs)?;
        Ok(Self { grid: *grid, designs, matrices })
    }

    pub fn from_parts(grid: Grid, designs: Vec<Design>, matrices: Vec<ProjectionMatrix>) -> Result<Self> {
        if designs.len() != matrices.len() {
            return invalid("designs and matrices differ in length");
        }
        Ok(Self { grid, designs, matrices })
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }
}

/// Scores every candidate.
pub fn score_all(cov: &DMatrix<f64>, candidates: &CandidateSet, sigma: f64, weight: &Weight) -> Result<Vec<DesignScore>> {
    weight.check(cov.nrows())?;
    let base = weight.trace(cov);
    candidates
        .matrices
        .par_iter()
        .enumerate()
        .map(|(index, r)| {
            check_inputs(cov, r, sigma)?;
            Ok(DesignScore { index, trace: base - information_gain(cov, r, sigma, weight)? })
        })
        .collect()
}

/// Exhaustive A-optimal search; ties go to the lowest index.
pub fn select_design(cov: &DMatrix<f64>, candidates: &CandidateSet, sigma: f64, weight: &Weight) -> Result<Selection> {
    let scores = score_all(cov, candidates, sigma, weight)?;
    let best = argmin(&scores)?;
    Ok(Selection { index: best.index, design: candidates.designs[best.index], score: best.trace })
}

pub fn argmin(scores: &[DesignScore]) -> Result<DesignScore> {
    let mut best: Option<DesignScore> = None;
    for s in scores {
        if !s.trace.is_finite() {
            return Err(Error::NumericalFailure(format!("candidate {} has a non-finite score", s.index)));
        }
        match best {
            Some(b) if (b.trace, b.index) <= (s.trace, s.index) => {}
            _ => best = Some(*s),
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no candidates to choose from".into()))
}

/// Covariance on the design grid: the current reconstruction is interpolated
/// onto `coarse`, its stiffness matrix defines the prior, and every past
/// projection (reassembled on `coarse`) enters as data.
pub fn coarse_state(
    mean: &Image,
    coarse: &Grid,
    coarse_sys: &StackedSystem,
    params: &TvParams,
    cap: usize,
) -> Result<DMatrix<f64>> {
    if coarse.cells_per_edge() > mean.grid().cells_per_edge() {
        return invalid("design grid must not be finer than the reconstruction grid");
    }
    let restricted = mean.restrict(coarse)?;
    let h = stiffness(&restricted, params.t)?;
    posterior_cov(&h, coarse_sys, params.gamma, cap)
}

/// Covariance after observing projection `r` with noise level `sigma`.
pub fn update_covariance(cov: &DMatrix<f64>, r: &ProjectionMatrix, sigma: f64) -> Result<DMatrix<f64>> {
    check_inputs(cov, r, sigma)?;
    let m = r.nrows();
    if m == 0 {
        return Ok(cov.clone());
    }
    let grt = cov_times_rt(cov, r);
    let mut s = r.mul_dense(&grt);
    symmetrize(&mut s);
    for a in 0..m {
        s[(a, a)] += sigma * sigma;
    }
    let chol = dense_cholesky(s, "projected covariance")?;
    let mut y = grt.transpose();
    chol.l().solve_lower_triangular_mut(&mut y);
    let mut out = cov - y.transpose() * &y;
    symmetrize(&mut out);
    Ok(out)
}
