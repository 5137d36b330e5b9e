//! Dense row-major matrices and the few factorizations the pipeline needs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// New matrix holding the given rows, in order (duplicates allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * indices.len());
        for r in self.iter_rows() {
            data.extend(indices.iter().map(|&j| r[j]));
        }
        Matrix {
            rows: self.rows,
            cols: indices.len(),
            data,
        }
    }

    /// Appends the rows of `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols && self.rows > 0 && other.rows > 0 {
            return Err(Error::Shape(format!(
                "cannot stack {} columns on {} columns",
                other.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols.max(other.cols),
            data,
        })
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.data.is_empty() {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::Shape(format!(
                "row has {} entries, expected {}",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
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

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric eigendecomposition: (eigenvalues, eigenvectors as columns).
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
    let eig = nalgebra::SymmetricEigen::new(m);
    let values = eig.eigenvalues.iter().copied().collect();
    let vectors = Matrix {
        rows: n,
        cols: n,
        data: (0..n)
            .flat_map(|i| {
                let v = &eig.eigenvectors;
                (0..n).map(move |j| v[(i, j)])
            })
            .collect(),
    };
    (values, vectors)
}

/// Lower Cholesky factor of a positive semidefinite matrix.
///
/// Pivots within `tol` of zero produce a zero column; a pivot below `-tol`
/// is reported as [`Error::NotPositiveSemidefinite`].
pub fn cholesky_semidefinite(a: &Matrix, tol: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "Cholesky needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol || d.is_nan() {
            return Err(Error::NotPositiveSemidefinite { pivot: j, value: d });
        }
        if d <= tol {
            continue;
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `a x = b` for symmetric positive definite `a`.
fn solve_spd(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    let l = cholesky_semidefinite(a, 0.0).ok()?;
    if (0..n).any(|i| l[(i, i)] <= 0.0) {
        return None;
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Some(x)
}

/// Ordinary least squares fit `y ≈ intercept + Σ coef_j x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Least squares with an intercept on standardized predictors.
///
/// Constant predictors get a zero coefficient. Collinear predictors are
/// handled by a vanishing ridge term (1e-10 per row on the standardized
/// scale), which selects the minimum-norm solution up to that tolerance.
pub fn least_squares(x: &Matrix, y: &[f64]) -> Result<LinearFit> {
    let n = x.rows();
    let p = x.cols();
    if n == 0 || y.len() != n {
        return Err(Error::Shape(format!(
            "least squares needs matching non-empty inputs, got {n} rows and {} targets",
            y.len()
        )));
    }
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut means = vec![0.0; p];
    for r in x.iter_rows() {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= nf);
    let mut scales = vec![0.0; p];
    for r in x.iter_rows() {
        for j in 0..p {
            let d = r[j] - means[j];
            scales[j] += d * d;
        }
    }
    let active: Vec<usize> = (0..p)
        .filter(|&j| {
            let sd = libm::sqrt(scales[j] / nf);
            scales[j] = sd;
            sd > 1e-12 * (1.0 + means[j].abs())
        })
        .collect();
    let q = active.len();
    let mut gram = Matrix::zeros(q, q);
    let mut rhs = vec![0.0; q];
    let mut z = vec![0.0; q];
    for (r, yi) in x.iter_rows().zip(y) {
        for (a, &j) in active.iter().enumerate() {
            z[a] = (r[j] - means[j]) / scales[j];
        }
        let yc = yi - y_mean;
        for a in 0..q {
            rhs[a] += z[a] * yc;
            let za = z[a];
            let grow = gram.row_mut(a);
            for b in 0..=a {
                grow[b] += za * z[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let mut ridge = 1e-10 * nf;
    let beta = loop {
        let mut g = gram.clone();
        for a in 0..q {
            g[(a, a)] += ridge;
        }
        if let Some(beta) = solve_spd(&g, &rhs) {
            break beta;
        }
        ridge *= 100.0;
        if ridge > nf {
            return Err(Error::Shape("least squares system is numerically singular".into()));
        }
    };
    let mut coef = vec![0.0; p];
    let mut intercept = y_mean;
    for (a, &j) in active.iter().enumerate() {
        coef[j] = beta[a] / scales[j];
        intercept -= coef[j] * means[j];
    }
    Ok(LinearFit { intercept, coef })
}

pub fn column_means(x: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; x.cols()];
    for r in x.iter_rows() {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    let n = x.rows().max(1) as f64;
    means.iter_mut().for_each(|m| *m /= n);
    means
}

/// Sample covariance (denominator n - 1). Requires at least two rows.
pub fn sample_covariance(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "sample covariance needs at least 2 rows, got {n}"
        )));
    }
    let p = x.cols();
    let means = column_means(x);
    let mut cov = Matrix::zeros(p, p);
    let mut d = vec![0.0; p];
    for r in x.iter_rows() {
        for j in 0..p {
            d[j] = r[j] - means[j];
        }
        for a in 0..p {
            let da = d[a];
            let crow = cov.row_mut(a);
            for b in 0..=a {
                crow[b] += da * d[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..p {
        for b in 0..=a {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exact_line() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [5.0]]).unwrap();
        let fit = least_squares(&x, &[3.0, 6.0, 9.0, 15.0]).unwrap();
        assert!((fit.predict(&[4.0]) - 12.0).abs() < 1e-9);
    }

    #[test]
    fn least_squares_tolerates_collinear_columns() {
        // second column duplicates the first, third is constant
        let x = Matrix::from_rows(&[
            [1.0, 1.0, 7.0],
            [2.0, 2.0, 7.0],
            [4.0, 4.0, 7.0],
            [5.0, 5.0, 7.0],
        ])
        .unwrap();
        let fit = least_squares(&x, &[2.0, 4.0, 8.0, 10.0]).unwrap();
        assert!((fit.predict(&[3.0, 3.0, 7.0]) - 6.0).abs() < 1e-6);
        assert_eq!(fit.coef[2], 0.0);
    }

    #[test]
    fn covariance_of_scaled_column() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [4.0, 8.0]]).unwrap();
        let c = sample_covariance(&x).unwrap();
        assert!((c[(0, 1)] - 2.0 * c[(0, 0)]).abs() < 1e-12);
        assert!((c[(1, 1)] - 4.0 * c[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs() {
        let a = Matrix::from_rows(&[[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a);
        let lam = Matrix::diagonal(&vals);
        let back = vecs.matmul(&lam).unwrap().matmul(&vecs.transpose()).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-12);
    }
}
