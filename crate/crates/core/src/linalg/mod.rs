//! Linear algebra shared by the prior, inference and design modules.

mod banded;
mod sparse;

pub use banded::{BandCholesky, SymBand};
pub use sparse::CsrMatrix;

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Dense Cholesky that reports failure as a numerical error.
pub fn dense_cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::NumericalFailure(format!("{what} is not positive definite")))
}

/// Mirrors the lower triangle onto the upper one.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
