//! Small dense matrices and a Householder QR least-squares solver.

use std::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        Matrix::from_row_major(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Result of a least-squares solve `min ||A x - b||`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: Vec<f64>,
    /// Inverse of the `p x p` triangular factor, so `(A'A)^-1 = R^-1 R^-T`.
    pub r_inverse: Matrix,
}

/// The triangular factor has a pivot below `tolerance * max pivot`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankDeficient {
    pub column: usize,
    pub pivot: f64,
    pub largest: f64,
}

/// Solves a full-column-rank least-squares problem by Householder QR.
pub fn householder_lstsq(
    a: &Matrix,
    b: &[f64],
    tolerance: f64,
) -> Result<LeastSquares, RankDeficient> {
    let (n, p) = (a.rows(), a.cols());
    assert!(n >= p && p >= 1);
    assert_eq!(b.len(), n);
    let mut r = a.clone();
    let mut qtb = b.to_vec();

    for j in 0..p {
        let norm = (j..n).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(j, j)] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place below the diagonal
        let mut v: Vec<f64> = (j..n).map(|i| r[(i, j)]).collect();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        for k in j..p {
            let dot: f64 = (j..n).map(|i| v[i - j] * r[(i, k)]).sum();
            let scale = 2.0 * dot / vtv;
            for i in j..n {
                r[(i, k)] -= scale * v[i - j];
            }
        }
        let dot: f64 = (j..n).map(|i| v[i - j] * qtb[i]).sum();
        let scale = 2.0 * dot / vtv;
        for i in j..n {
            qtb[i] -= scale * v[i - j];
        }
    }

    let largest = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    for j in 0..p {
        let pivot = r[(j, j)].abs();
        if largest == 0.0 || pivot < tolerance * largest || !pivot.is_finite() {
            return Err(RankDeficient {
                column: j,
                pivot,
                largest,
            });
        }
    }

    let mut solution = vec![0.0; p];
    for j in (0..p).rev() {
        let tail: f64 = (j + 1..p).map(|k| r[(j, k)] * solution[k]).sum();
        solution[j] = (qtb[j] - tail) / r[(j, j)];
    }

    let mut r_inverse = Matrix::zeros(p, p);
    for col in 0..p {
        for j in (0..=col).rev() {
            let rhs = if j == col { 1.0 } else { 0.0 };
            let tail: f64 = (j + 1..=col).map(|k| r[(j, k)] * r_inverse[(k, col)]).sum();
            r_inverse[(j, col)] = (rhs - tail) / r[(j, j)];
        }
    }

    Ok(LeastSquares {
        solution,
        r_inverse,
    })
}
