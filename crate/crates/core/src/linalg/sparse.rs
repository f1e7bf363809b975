use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn empty(ncols: usize) -> Self {
        Self { nrows: 0, ncols, row_ptr: vec![0], cols: Vec::new(), vals: Vec::new() }
    }

    /// Builds a matrix from per-row `(column, value)` lists. Columns within a
    /// row are sorted; duplicates are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut m = Self::empty(ncols);
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, mut row: Vec<(usize, f64)>) -> Result<()> {
        row.sort_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        for (c, v) in row {
            if c >= self.ncols {
                return invalid(format!("column {c} out of range for {} columns", self.ncols));
            }
            if last == Some(c) {
                *self.vals.last_mut().expect("nonempty") += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
                last = Some(c);
            }
        }
        self.row_ptr.push(self.cols.len());
        self.nrows += 1;
        Ok(())
    }

    /// Builds from `(row, col, value)` triplets in any order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows {
                return invalid(format!("row {r} out of range for {nrows} rows"));
            }
            rows[r].push((c, v));
        }
        Self::from_rows(ncols, rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&c, &v)| (i, c, v))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `selfᵀ y`.
    pub fn tr_matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                out[c] += v * yi;
            }
        }
        out
    }

    /// Appends the rows of `other` below `self`.
    pub fn vstack(&mut self, other: &CsrMatrix) -> Result<()> {
        if other.ncols != self.ncols {
            return invalid(format!(
                "cannot stack a matrix with {} columns onto one with {}",
                other.ncols, self.ncols
            ));
        }
        let base = self.cols.len();
        self.cols.extend_from_slice(&other.cols);
        self.vals.extend_from_slice(&other.vals);
        self.row_ptr.extend(other.row_ptr[1..].iter().map(|p| p + base));
        self.nrows += other.nrows;
        Ok(())
    }

    /// Dense product `self * m` for a dense `m` with `ncols` rows.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(m.nrows(), self.ncols);
        let k = m.ncols();
        // accumulate rows of the result; nalgebra is column-major so work on
        // the transpose to keep the inner loop contiguous
        let mt = m.transpose();
        let mut out_t = DMatrix::<f64>::zeros(k, self.nrows);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            let mut dst = out_t.column_mut(i);
            for (&c, &v) in c.iter().zip(v) {
                dst.axpy(v, &mt.column(c), 1.0);
            }
        }
        out_t.transpose()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }

    /// Smallest column index touched by row `i`, if the row is nonempty.
    pub fn row_first_col(&self, i: usize) -> Option<usize> {
        self.row(i).0.first().copied()
    }
}
