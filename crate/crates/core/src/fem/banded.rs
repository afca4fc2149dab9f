//! Banded Cholesky factorization `A = L Lᵀ` for the shift-invert solves of
//! the eigensolver. Structured-grid operators in lexicographic order have
//! half-bandwidth `≈ n`, so the factor costs `O(N n²)` and each solve `O(N n)`.

use crate::error::{Error, Result};
use crate::fem::sparse::SparseOperator;

#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i-bw ..= i]`; entries left of column 0 stay zero.
    data: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

impl BandCholesky {
    /// Factors a symmetric operator. Fails if a pivot is not positive, i.e. the
    /// operator is not positive definite.
    pub fn factor(op: &SparseOperator) -> Result<Self> {
        let n = op.nrows();
        let bw = op.bandwidth();
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = op.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                // Σ_{k=lo}^{j-1} L[i][k] L[j][k]
                let (head, tail) = data.split_at_mut(i * w);
                let row_i = &mut tail[..w];
                let s = if j == i {
                    let r = &row_i[(lo + bw - i)..bw];
                    row_i[bw] - dot(r, r)
                } else {
                    let row_j = &head[j * w..(j + 1) * w];
                    let ri = &row_i[(lo + bw - i)..(j + bw - i)];
                    let rj = &row_j[(lo + bw - j)..bw];
                    row_i[j + bw - i] - dot(ri, rj)
                };
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::Spectral(format!(
                            "Cholesky pivot {s:.3e} at row {i}: operator is not positive definite"
                        )));
                    }
                    row_i[bw] = s.sqrt();
                } else {
                    let ljj = head[j * w + bw];
                    row_i[j + bw - i] = s / ljj;
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_many_in_place(&mut x, 1);
        x
    }

    /// Solves for `p` right-hand sides stored row-major (`x[i * p + c]`), which
    /// streams the factor once per sweep instead of once per vector.
    pub fn solve_many_in_place(&self, x: &mut [f64], p: usize) {
        assert_eq!(x.len(), self.n * p);
        let (bw, w) = (self.bw, self.bw + 1);
        // forward: L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * w..(i + 1) * w];
            let (before, rest) = x.split_at_mut(i * p);
            let xi = &mut rest[..p];
            for k in lo..i {
                let l = row[k + bw - i];
                if l != 0.0 {
                    let xk = &before[k * p..(k + 1) * p];
                    for c in 0..p {
                        xi[c] -= l * xk[c];
                    }
                }
            }
            let inv = 1.0 / row[bw];
            xi.iter_mut().for_each(|v| *v *= inv);
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * w..(i + 1) * w];
            let (before, rest) = x.split_at_mut(i * p);
            let xi = &mut rest[..p];
            let inv = 1.0 / row[bw];
            xi.iter_mut().for_each(|v| *v *= inv);
            for k in lo..i {
                let l = row[k + bw - i];
                if l != 0.0 {
                    let xk = &mut before[k * p..(k + 1) * p];
                    for c in 0..p {
                        xk[c] -= l * xi[c];
                    }
                }
            }
        }
    }
}
