//! Compressed sparse row storage and a banded LU factorization.
//!
//! Row-major node numbering on a structured mesh yields matrices whose
//! bandwidth equals one grid row, so a banded direct solver with partial
//! pivoting is a sparse direct solver for every system assembled here.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Square or rectangular CSR matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));

        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_offsets[r + 1] += row_offsets[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
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
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn mul_dvec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.mul_vec(x.as_slice()))
    }

    /// `alpha * self + beta * other` for matrices of equal shape.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let triplets: Vec<_> = self
            .triplets()
            .map(|(r, c, v)| (r, c, alpha * v))
            .chain(other.triplets().map(|(r, c, v)| (r, c, beta * v)))
            .collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, &triplets)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Lower and upper bandwidths `(kl, ku)`.
    pub fn bandwidths(&self) -> (usize, usize) {
        self.triplets().fold((0, 0), |(kl, ku), (r, c, _)| {
            if r > c {
                (kl.max(r - c), ku)
            } else {
                (kl, ku.max(c - r))
            }
        })
    }
}

/// LU factorization with partial pivoting of a banded square matrix.
///
/// Row `r` stores columns `[r - kl, r + kl + ku]`; the extra `kl`
/// superdiagonals hold fill produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    upper: Vec<f64>,
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factorize(matrix: &CsrMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "banded LU (square matrix)",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        let (kl, ku) = matrix.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut upper = vec![0.0; n * width];
        let mut scale: f64 = 0.0;
        for (r, c, v) in matrix.triplets() {
            upper[r * width + c + kl - r] += v;
            scale = scale.max(v.abs());
        }
        let tiny = scale * f64::EPSILON * n.max(1) as f64;

        let mut lower = vec![0.0; n * kl];
        let mut pivots = vec![0usize; n];
        let at = |r: usize, c: usize| r * width + c + kl - r;

        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);

            let mut p = i;
            let mut best = upper[at(i, i)].abs();
            for r in i + 1..=last_row {
                let v = upper[at(r, i)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(Error::SingularMatrix(i));
            }
            pivots[i] = p;
            if p != i {
                for c in i..=last_col {
                    upper.swap(at(i, c), at(p, c));
                }
            }

            let pivot = upper[at(i, i)];
            for r in i + 1..=last_row {
                let factor = upper[at(r, i)] / pivot;
                lower[i * kl + (r - i - 1)] = factor;
                upper[at(r, i)] = 0.0;
                if factor != 0.0 {
                    for c in i + 1..=last_col {
                        upper[at(r, c)] -= factor * upper[at(i, c)];
                    }
                }
            }
        }

        Ok(BandedLu {
            n,
            kl,
            ku,
            upper,
            lower,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "banded LU solve",
                expected: self.n,
                got: b.len(),
            });
        }
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let width = 2 * kl + ku + 1;

        for i in 0..n {
            let p = self.pivots[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            if bi != 0.0 {
                let last_row = (i + kl).min(n - 1);
                for r in i + 1..=last_row {
                    b[r] -= self.lower[i * kl + (r - i - 1)] * bi;
                }
            }
        }

        for i in (0..n).rev() {
            let row = &self.upper[i * width..(i + 1) * width];
            let last_col = (i + kl + ku).min(n - 1);
            let mut acc = b[i];
            for c in i + 1..=last_col {
                acc -= row[c + kl - i] * b[c];
            }
            b[i] = acc / row[kl];
        }
        Ok(())
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice())?;
        Ok(x)
    }
}
