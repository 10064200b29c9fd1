//! Compressed sparse row storage for nonnegative matrices.

use crate::error::{Error, Result};

/// CSR matrix with nonnegative finite values and strictly increasing columns
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRowMatrix {
    /// Validates and wraps raw CSR arrays.
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("csr: {m}")));
        if row_offsets.len() != n_rows + 1 || row_offsets[0] != 0 {
            return bad(format!(
                "row_offsets has length {} (need {})",
                row_offsets.len(),
                n_rows + 1
            ));
        }
        if col_indices.len() != values.len() || *row_offsets.last().unwrap() != values.len() {
            return bad("nnz disagrees between offsets, columns and values".into());
        }
        if n_cols > u32::MAX as usize {
            return bad(format!("{n_cols} columns exceed u32 indexing"));
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return bad(format!("row_offsets decrease at row {r}"));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {r} columns not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c as usize >= n_cols) {
                return bad(format!("row {r} has a column >= {n_cols}"));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return bad(format!("value {v} is negative or non-finite"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from per-row `(col, value)` lists; each list must be sorted by
    /// column without duplicates.
    pub fn from_rows(n_cols: usize, rows: &[Vec<(u32, f64)>]) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for row in rows {
            for &(c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_parts(rows.len(), n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    /// Dense row-major copy, mainly for oracles.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out[r * self.n_cols + c] = v;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_cols(&self, r: usize) -> &[u32] {
        &self.col_indices[self.row_offsets[r]..self.row_offsets[r + 1]]
    }

    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.row_offsets[r]..self.row_offsets[r + 1]]
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_cols(r)
            .iter()
            .zip(self.row_values(r))
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = self.row_cols(r);
        match cols.binary_search(&(c as u32)) {
            Ok(k) => self.row_values(r)[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row_values(r).iter().sum()
    }

    /// New matrix whose row `k` copies row `indices[k]`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(indices.len() + 1);
        row_offsets.push(0);
        let nnz: usize = indices
            .iter()
            .map(|&i| {
                if i >= self.n_rows {
                    Err(Error::IndexOutOfRange {
                        what: "sparse row",
                        index: i,
                        len: self.n_rows,
                    })
                } else {
                    Ok(self.row_offsets[i + 1] - self.row_offsets[i])
                }
            })
            .sum::<Result<usize>>()?;
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for &i in indices {
            col_indices.extend_from_slice(self.row_cols(i));
            values.extend_from_slice(self.row_values(i));
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }
}
