//! Compressed-row storage for the symmetric operators produced by assembly.

/// Square sparse matrix in compressed row layout with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Builds the matrix from `(row, col, value)` triplets; duplicates are summed
    /// in insertion order so the result is reproducible bit for bit.
    pub fn from_triplets(nrows: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(triplets.len() / 2);
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < nrows, "triplet ({r},{c}) out of range {nrows}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { nrows, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal_matrix(&vec![1.0; n])
    }

    pub fn diagonal_matrix(d: &[f64]) -> Self {
        Self {
            nrows: d.len(),
            row_ptr: (0..=d.len()).collect(),
            cols: (0..d.len()).collect(),
            vals: d.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * x[c];
            }
            *yr = s;
        }
    }

    /// `xᵀ A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let y = self.mul_vec(x);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// `xᵀ A y`
    pub fn bilinear_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.get(r, r)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn sum_entries(&self) -> f64 {
        self.vals.iter().sum()
    }

    /// `max |a_ij − a_ji|`, with a missing transpose entry counted as zero.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Largest `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0;
        for r in 0..self.nrows {
            let (cols, _) = self.row(r);
            if let (Some(&first), Some(&last)) = (cols.first(), cols.last()) {
                b = b.max(r.saturating_sub(first)).max(last.saturating_sub(r));
            }
        }
        b
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self + c · other` over the union of both sparsity patterns.
    pub fn add_scaled(&self, other: &SparseOperator, c: f64) -> Self {
        assert_eq!(self.nrows, other.nrows);
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut cols = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut vals = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_ptr.push(0);
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                let next_a = ca.get(i).copied().unwrap_or(usize::MAX);
                let next_b = cb.get(j).copied().unwrap_or(usize::MAX);
                if next_a == next_b {
                    cols.push(next_a);
                    vals.push(va[i] + c * vb[j]);
                    i += 1;
                    j += 1;
                } else if next_a < next_b {
                    cols.push(next_a);
                    vals.push(va[i]);
                    i += 1;
                } else {
                    cols.push(next_b);
                    vals.push(c * vb[j]);
                    j += 1;
                }
            }
            row_ptr.push(cols.len());
        }
        Self { nrows: self.nrows, row_ptr, cols, vals }
    }

    /// Dense copy, for small test problems only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.nrows]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_are_summed() {
        let a = SparseOperator::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 2.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.symmetry_defect(), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![6.0, 2.0]);
    }

    proptest! {
        #[test]
        fn add_scaled_matches_dense(
            entries_a in prop::collection::vec((0usize..6, 0usize..6, -5.0f64..5.0), 0..20),
            entries_b in prop::collection::vec((0usize..6, 0usize..6, -5.0f64..5.0), 0..20),
            c in -3.0f64..3.0,
        ) {
            let a = SparseOperator::from_triplets(6, entries_a);
            let b = SparseOperator::from_triplets(6, entries_b);
            let sum = a.add_scaled(&b, c).to_dense();
            let (da, db) = (a.to_dense(), b.to_dense());
            for r in 0..6 {
                for k in 0..6 {
                    prop_assert!((sum[r][k] - (da[r][k] + c * db[r][k])).abs() < 1e-12);
                }
            }
        }
    }
}
