//! Compressed-row generator matrices.

use crate::{Error, Result};

/// Row-compressed square matrix, used for Markov generators.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGenerator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseGenerator {
    /// Builds from per-row `(column, value)` lists.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                if c >= n {
                    return Err(Error::InvalidInput(format!("column {c} out of range for {n} states")));
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { n, row_ptr, cols, vals })
    }

    /// Builds from a dense row-major matrix, dropping exact zeros off the diagonal.
    pub fn from_dense(q: &[Vec<f64>]) -> Result<Self> {
        let rows = q
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|&(j, v)| j == i || *v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    /// Row vector times matrix, `v B`.
    pub fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (c, b) in self.row(i) {
                    out[c] += vi * b;
                }
            }
        }
        out
    }

    /// Matrix times column vector, `B f`.
    pub fn apply_right(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, b)| b * f[c]).sum()).collect()
    }

    /// Largest total exit rate `max_i -B_ii`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n).map(|i| -self.get(i, i)).fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] += v;
            }
        }
        d
    }

    /// Checks the generator sign pattern.
    pub fn check_generator(&self) -> Result<()> {
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                if c != i && v < 0.0 {
                    return Err(Error::InvalidInput(format!("negative rate B[{i}][{c}] = {v}")));
                }
            }
        }
        Ok(())
    }
}
