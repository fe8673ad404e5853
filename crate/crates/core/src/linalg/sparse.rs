use std::collections::BTreeMap;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Symmetric sparse matrix in compressed-row form with the full pattern stored.
///
/// Entry (i, j) is present iff (j, i) is, with bitwise-equal values. Column indices are
/// strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Assemble from (row, col, value) triplets. Duplicates are summed, the result is
    /// replaced by (A + Aᵀ)/2 and exact zeros are dropped.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch { expected: n, got: i.max(j) + 1 });
            }
            *rows[i].entry(j).or_insert(0.0) += v;
            rows[j].entry(i).or_insert(0.0);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for (&j, &v) in &rows[i] {
                let vt = rows[j][&i];
                let sym = if i == j { v } else { 0.5 * (v + vt) };
                if sym != 0.0 {
                    col_idx.push(j);
                    vals.push(sym);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseSym { n, row_ptr, col_idx, vals })
    }

    /// Build directly from CSR arrays; the caller guarantees symmetry and sorted columns.
    pub(crate) fn from_csr_unchecked(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(col_idx.len(), vals.len());
        SparseSym { n, row_ptr, col_idx, vals }
    }

    pub fn identity(n: usize) -> Self {
        SparseSym {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.rows(), &t)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    /// Columns and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// Iterate over all stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// y = A·x without dimension checks beyond debug assertions.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// Dense principal submatrix on `indices` (sorted ascending).
    pub fn submatrix(&self, indices: &[usize]) -> DenseMatrix {
        let m = indices.len();
        let mut out = DenseMatrix::zeros(m, m);
        for (li, &gi) in indices.iter().enumerate() {
            let (cols, vals) = self.row(gi);
            // merge two sorted lists
            let (mut a, mut b) = (0, 0);
            while a < cols.len() && b < m {
                match cols[a].cmp(&indices[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        out[(li, b)] = vals[a];
                        a += 1;
                        b += 1;
                    }
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.entries() {
            out[(i, j)] = v;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same pattern, values mapped entrywise.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> SparseSym {
        let vals = self.entries().map(|(i, j, v)| f(i, j, v)).collect();
        SparseSym { n: self.n, row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), vals }
    }

    /// True when the stored pattern and values are exactly symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.entries().all(|(i, j, v)| {
            let (cols, vals) = self.row(j);
            matches!(cols.binary_search(&i), Ok(k) if vals[k].to_bits() == v.to_bits())
        }) && (0..self.n).all(|i| self.row(i).0.windows(2).all(|w| w[0] < w[1]))
    }
}
