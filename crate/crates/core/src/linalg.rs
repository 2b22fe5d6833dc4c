//! Dense symmetric linear algebra used by the Gram checks and the sampler.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows below this count are processed sequentially in the Cholesky column sweep.
const PARALLEL_ROWS: usize = 256;

/// Dot product with a fixed four-lane accumulation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lower-triangular factor stored row-major (entries above the diagonal are zero).
#[derive(Clone, Debug, PartialEq)]
pub struct LowerFactor {
    n: usize,
    data: Vec<f64>,
}

impl LowerFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..i * self.n + i + 1]
    }

    /// `L z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), &z[..=i])).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

/// Cholesky factorization of `a + shift·I`.
///
/// Returns the index of the first non-positive pivot on failure. Every entry is
/// computed by the same sequential dot product whatever the thread count.
pub fn cholesky(a: &DMatrix<f64>, shift: f64) -> std::result::Result<LowerFactor, usize> {
    let n = a.nrows();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            data[i * n + j] = a[(i, j)];
        }
        data[i * n + i] += shift;
    }
    for j in 0..n {
        let (top, bottom) = data.split_at_mut((j + 1) * n);
        let row_j = &mut top[j * n..(j + 1) * n];
        let pivot = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(pivot > 0.0) {
            return Err(j);
        }
        let diag = pivot.sqrt();
        row_j[j] = diag;
        let row_j = &*row_j;
        let update = |row: &mut [f64]| {
            row[j] = (row[j] - dot(&row[..j], &row_j[..j])) / diag;
        };
        if n - j - 1 > PARALLEL_ROWS {
            bottom.par_chunks_mut(n).for_each(update);
        } else {
            bottom.chunks_mut(n).for_each(update);
        }
    }
    Ok(LowerFactor { n, data })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    check_finite(a)?;
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::new(a.clone());
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

pub(crate) fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite(i, j));
            }
        }
    }
    Ok(())
}

/// Diagonally pivoted Cholesky used as a semidefiniteness test.
///
/// Eliminates the largest remaining pivot until it drops below `tol`; succeeds
/// if no remaining diagonal entry of the Schur complement is below `-tol`.
/// Returns the numerical rank on success.
pub fn pivoted_cholesky_rank(a: &DMatrix<f64>, tol: f64) -> Option<usize> {
    let n = a.nrows();
    let mut s = a.clone();
    let mut active: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while !active.is_empty() {
        let (pos, &p) = active
            .iter()
            .enumerate()
            .max_by(|x, y| s[(*x.1, *x.1)].total_cmp(&s[(*y.1, *y.1)]))
            .expect("non-empty");
        let pivot = s[(p, p)];
        if pivot <= tol {
            return active.iter().all(|&i| s[(i, i)] >= -tol).then_some(rank);
        }
        active.swap_remove(pos);
        for &i in &active {
            let lip = s[(i, p)] / pivot;
            for &k in &active {
                s[(i, k)] -= lip * s[(p, k)];
            }
        }
        rank += 1;
    }
    Some(rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| (i.min(j) + 1) as f64)
    }

    #[test]
    fn one_by_one() {
        let a = DMatrix::from_element(1, 1, 4.0);
        let l = cholesky(&a, 0.0).unwrap();
        assert_eq!(l.get(0, 0), 2.0);
    }

    #[test]
    fn reconstructs_matrix() {
        for n in [3, 17, 300] {
            let a = spd(n);
            let l = cholesky(&a, 0.0).unwrap().to_matrix();
            let back = &l * l.transpose();
            let err = (&back - &a).abs().max();
            assert!(err < 1e-9 * n as f64, "n={n} err={err}");
        }
    }

    #[test]
    fn fails_on_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky(&a, 0.0), Err(1));
        assert!(pivoted_cholesky_rank(&a, 1e-12).is_none());
        assert!(min_eigenvalue(&a).unwrap() < -0.9);
    }

    #[test]
    fn pivoted_handles_semidefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky(&a, 0.0).is_err());
        assert_eq!(pivoted_cholesky_rank(&a, 1e-12), Some(1));
    }

    #[test]
    fn non_finite_rejected() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(min_eigenvalue(&a), Err(Error::NonFinite(0, 0))));
    }
}
