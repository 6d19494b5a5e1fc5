//! Small dense-matrix helpers: a flat row-major `Mat` with gemm products,
//! plus the two factorizations the crate needs (Cholesky for SPD ridge
//! systems, partially pivoted LU for the implicit-integrator solves).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("shape mismatch: ({0}, {1}) vs ({2}, {3})")]
    Shape(usize, usize, usize, usize),
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm(
            self.rows, self.cols, other.cols,
            &self.data, self.cols as isize, 1,
            &other.data, other.cols as isize, 1,
            &mut out.data, other.cols as isize, 1,
        );
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.cols, other.cols);
        gemm(
            self.cols, self.rows, other.cols,
            &self.data, 1, self.cols as isize,
            &other.data, other.cols as isize, 1,
            &mut out.data, other.cols as isize, 1,
        );
        out
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.rows);
        gemm(
            self.rows, self.cols, other.rows,
            &self.data, self.cols as isize, 1,
            &other.data, 1, other.cols as isize,
            &mut out.data, other.rows as isize, 1,
        );
        out
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "vector length must equal cols");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            out[i] = acc;
        }
        out
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
    }

    pub fn add_diagonal(&mut self, v: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += v;
        }
    }

    pub fn mean_diagonal(&self) -> f64 {
        let n = self.rows.min(self.cols);
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self.get(i, i)).sum::<f64>() / n as f64
    }

    /// Solve `self * X = rhs` for SPD `self` via Cholesky. `self` is consumed
    /// as factorization workspace.
    pub fn cholesky_solve(mut self, rhs: &Mat) -> Result<Mat, LinalgError> {
        let n = self.rows;
        if self.cols != n || rhs.rows != n {
            return Err(LinalgError::Shape(self.rows, self.cols, rhs.rows, rhs.cols));
        }
        // In-place lower Cholesky factor.
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                let l = self.get(j, k);
                d -= l * l;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            self.set(j, j, d);
            for i in (j + 1)..n {
                let mut v = self.get(i, j);
                for k in 0..j {
                    v -= self.get(i, k) * self.get(j, k);
                }
                self.set(i, j, v / d);
            }
        }
        let mut x = rhs.clone();
        let m = x.cols;
        // Forward substitution L y = b.
        for i in 0..n {
            for c in 0..m {
                let mut v = x.get(i, c);
                for k in 0..i {
                    v -= self.get(i, k) * x.get(k, c);
                }
                x.set(i, c, v / self.get(i, i));
            }
        }
        // Back substitution L^T x = y.
        for i in (0..n).rev() {
            for c in 0..m {
                let mut v = x.get(i, c);
                for k in (i + 1)..n {
                    v -= self.get(k, i) * x.get(k, c);
                }
                x.set(i, c, v / self.get(i, i));
            }
        }
        Ok(x)
    }

    /// Factor `P self = L U` with partial pivoting for repeated solves.
    pub fn lu_factor(mut self) -> Result<LuFactors, LinalgError> {
        let n = self.rows;
        if self.cols != n {
            return Err(LinalgError::Shape(self.rows, self.cols, self.rows, self.rows));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_val = self.get(k, k).abs();
            for i in (k + 1)..n {
                let v = self.get(i, k).abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = i;
                }
            }
            if pivot_val == 0.0 || !pivot_val.is_finite() {
                return Err(LinalgError::Singular {
                    row: k,
                    pivot: pivot_val,
                });
            }
            if pivot_row != k {
                for j in 0..n {
                    let a = self.get(k, j);
                    let b = self.get(pivot_row, j);
                    self.set(k, j, b);
                    self.set(pivot_row, j, a);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = self.get(k, k);
            for i in (k + 1)..n {
                let factor = self.get(i, k) / pivot;
                self.set(i, k, factor);
                if factor == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    let v = self.get(i, j) - factor * self.get(k, j);
                    self.set(i, j, v);
                }
            }
        }
        Ok(LuFactors { lu: self, perm })
    }

    /// One-shot solve of `self * x = rhs` via LU with partial pivoting.
    pub fn lu_solve(self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if rhs.len() != self.rows {
            return Err(LinalgError::Shape(self.rows, self.cols, rhs.len(), 1));
        }
        Ok(self.lu_factor()?.solve(rhs))
    }
}

/// LU factorization with row pivoting; factor once, solve many times.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: Mat,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        assert_eq!(rhs.len(), n, "rhs length must equal matrix size");
        let mut x: Vec<f64> = self.perm.iter().map(|&i| rhs[i]).collect();
        for i in 1..n {
            let mut v = x[i];
            for j in 0..i {
                v -= self.lu.get(i, j) * x[j];
            }
            x[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for j in (i + 1)..n {
                v -= self.lu.get(i, j) * x[j];
            }
            x[i] = v / self.lu.get(i, i);
        }
        x
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize, k: usize, n: usize,
    a: &[f64], rsa: isize, csa: isize,
    b: &[f64], rsb: isize, csb: isize,
    c: &mut [f64], rsc: isize, csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v = 0.0;
        }
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0, a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            0.0, c.as_mut_ptr(), rsc, csc,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_product() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Mat::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.5 - 1.0);
        let b = Mat::from_fn(4, 2, |i, j| (i + j) as f64);
        let tn = a.matmul_tn(&b);
        let explicit = a.transpose().matmul(&b);
        assert_eq!(tn, explicit);

        let c = Mat::from_fn(5, 3, |i, j| (i as f64) - (j as f64) * 0.25);
        let nt = a.matmul_nt(&c);
        let explicit = a.matmul(&c.transpose());
        assert_eq!(nt, explicit);
    }

    #[test]
    fn lu_solves_and_detects_singular() {
        let a = Mat::from_vec(3, 3, vec![2.0, 1.0, 1.0, 1.0, 3.0, 2.0, 1.0, 0.0, 0.5]);
        let x = a.clone().lu_solve(&[7.0, 13.0, 2.5]).unwrap();
        let back = a.matvec(&x);
        for (v, want) in back.iter().zip([7.0, 13.0, 2.5]) {
            assert!((v - want).abs() < 1e-12);
        }
        let singular = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            singular.lu_solve(&[1.0, 2.0]),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn lu_factor_reuses_across_solves() {
        let a = Mat::from_vec(3, 3, vec![4.0, -1.0, 0.5, 2.0, 5.0, 1.0, -1.0, 2.0, 3.0]);
        let factors = a.clone().lu_factor().unwrap();
        for rhs in [[1.0, 0.0, 0.0], [0.3, -2.0, 5.5], [1e3, 2e3, -1e3]] {
            let x = factors.solve(&rhs);
            let back = a.matvec(&x);
            for (v, want) in back.iter().zip(rhs) {
                assert!((v - want).abs() < 1e-9 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cholesky_solves_spd_and_rejects_indefinite() {
        // SPD by construction: A = B^T B + I.
        let b = Mat::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3);
        let mut a = b.matmul_tn(&b);
        a.add_diagonal(1.0);
        let rhs = Mat::from_vec(4, 1, vec![1.0, -2.0, 0.5, 3.0]);
        let x = a.clone().cholesky_solve(&rhs).unwrap();
        let back = a.matvec(x.data());
        for i in 0..4 {
            assert!((back[i] - rhs.get(i, 0)).abs() < 1e-10);
        }
        let indefinite = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        let rhs2 = Mat::from_vec(2, 1, vec![1.0, 1.0]);
        assert!(matches!(
            indefinite.cholesky_solve(&rhs2),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn matvec_and_diagonal_helpers() {
        let mut a = Mat::identity(3);
        a.add_diagonal(1.5);
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]), vec![2.5, 5.0, 7.5]);
        assert!((a.mean_diagonal() - 2.5).abs() < 1e-15);
    }
}
