//! Compressed sparse row storage used by the assembly and norm routines.
//!
//! Triplet accumulation is order-deterministic: duplicates are summed in the
//! order they were pushed, so repeated assemblies give bit-identical values.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Collects `(row, col, value)` contributions before compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(self) -> CsrMatrix {
        CsrMatrix::from_entries(self.nrows, self.ncols, self.entries)
    }

    /// Builds a symmetric matrix from contributions where only those with
    /// `row <= col` are kept; the strict upper part is then mirrored. The
    /// result is symmetric bit for bit.
    pub fn build_symmetric_from_upper(self) -> CsrMatrix {
        assert_eq!(self.nrows, self.ncols, "symmetric build needs a square matrix");
        let upper: Vec<_> = self.entries.into_iter().filter(|&(r, c, _)| r <= c).collect();
        let upper = CsrMatrix::from_entries(self.nrows, self.ncols, upper);
        let mut entries = Vec::with_capacity(2 * upper.nnz());
        for (r, c, v) in upper.iter() {
            entries.push((r, c, v));
            if r != c {
                entries.push((c, r, v));
            }
        }
        CsrMatrix::from_entries(self.nrows, self.ncols, entries)
    }
}

impl CsrMatrix {
    fn from_entries(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        // stable sort keeps the push order among duplicates
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matrix-vector size mismatch");
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `b − A x`, each row accumulated in doubled precision so that the
    /// cancellation between large entries does not swamp a small residual.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matrix-vector size mismatch");
        assert_eq!(b.len(), self.nrows, "right-hand side size mismatch");
        (0..self.nrows)
            .map(|r| {
                let (mut hi, mut lo) = (b[r], 0.0);
                for (c, v) in self.row(r) {
                    let p = -v * x[c];
                    let p_err = (-v).mul_add(x[c], -p);
                    let (s, s_err) = two_sum(hi, p);
                    hi = s;
                    lo += s_err + p_err;
                }
                hi + lo
            })
            .collect()
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        (0..self.nrows)
            .map(|r| x[r] * self.row(r).map(|(c, v)| v * y[c]).sum::<f64>())
            .sum()
    }

    pub fn transpose(&self) -> Self {
        let entries = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_entries(self.ncols, self.nrows, entries)
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &CsrMatrix) -> Result<Self> {
        if self.ncols != rhs.nrows {
            return Err(Error::SizeMismatch {
                context: "sparse matmul",
                expected: self.ncols,
                actual: rhs.nrows,
            });
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; rhs.ncols];
        let mut seen = vec![false; rhs.ncols];
        let mut cols: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if !seen[c] {
                        seen[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                indices.push(c);
                values.push(acc[c]);
                acc[c] = 0.0;
                seen[c] = false;
            }
            cols.clear();
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: rhs.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Entrywise `alpha * self + beta * other` over the union pattern.
    pub fn axpby(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let entries = self
            .iter()
            .map(|(r, c, v)| (r, c, alpha * v))
            .chain(other.iter().map(|(r, c, v)| (r, c, beta * v)))
            .collect();
        Self::from_entries(self.nrows, self.ncols, entries)
    }

    /// Largest absolute entry; 0 for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }

    /// Dense row-major copy; meant for small matrices in tests and oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] += v;
        }
        d
    }

    pub(crate) fn to_faer(&self) -> faer::sparse::SparseColMat<usize, f64> {
        use faer::sparse::{SparseColMat, Triplet};
        let triplets: Vec<_> = self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .expect("CSR entries are unique and in bounds")
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CsrMatrix {
        let mut t = TripletBuilder::new(3, 3);
        t.push(0, 0, 2.0);
        t.push(0, 1, -1.0);
        t.push(1, 0, -1.0);
        t.push(1, 1, 2.0);
        t.push(1, 1, 0.5);
        t.push(2, 2, 1.0);
        t.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let a = small();
        assert_eq!(a.get(1, 1), 2.5);
        assert_eq!(a.nnz(), 5);
        assert_eq!(a.get(2, 0), 0.0);
    }

    #[test]
    fn matvec_and_bilinear() {
        let a = small();
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![1.0, 1.5, 1.0]);
        assert_eq!(a.bilinear(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), -1.0);
    }

    #[test]
    fn matmul_against_dense() {
        let a = small();
        let mut t = TripletBuilder::new(3, 2);
        t.push(0, 0, 1.0);
        t.push(1, 1, 3.0);
        t.push(2, 0, -2.0);
        let b = t.build();
        let c = a.matmul(&b).unwrap().to_dense();
        assert_eq!(c, vec![vec![2.0, -3.0], vec![-1.0, 7.5], vec![-2.0, 0.0]]);
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn symmetric_build_mirrors_upper() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 1, 0.1);
        t.push(1, 0, 99.0); // dropped
        t.push(1, 1, 1.0);
        let a = t.build_symmetric_from_upper();
        assert!(a.is_symmetric());
        assert_eq!(a.get(1, 0), 0.1);
    }

    #[test]
    fn transpose_twice_is_identity() {
        let mut t = TripletBuilder::new(2, 3);
        t.push(0, 2, 4.0);
        t.push(1, 0, -1.0);
        let a = t.build();
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(a.transpose().get(2, 0), 4.0);
    }
}
