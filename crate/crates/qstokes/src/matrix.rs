//! Dense complex matrices and the factorizations the rest of the crate needs.
//!
//! Everything here is desk-scale (blocks of rank at most ~8, vectorized
//! Sylvester operators up to a few dozen rows), so the implementation favors
//! plain row-major storage, partial-pivoted LU and explicit loops over any
//! external linear-algebra backend.

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// `1` as a complex scalar.
pub fn one() -> C64 {
    C64::new(1.0, 0.0)
}

/// `0` as a complex scalar.
pub fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl std::fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                write!(f, "{:.6}{:+.6}i  ", self[(r, c)].re, self[(r, c)].im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = CMatrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    /// 1x1 matrix.
    pub fn scalar(v: C64) -> Self {
        CMatrix {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn diag(values: &[C64]) -> Self {
        let mut m = CMatrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn transpose(&self) -> CMatrix {
        let mut t = CMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn conj_transpose(&self) -> CMatrix {
        let mut t = CMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)].conj();
            }
        }
        t
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= s;
        }
        m
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn sub_matrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> CMatrix {
        let mut m = CMatrix::zeros(nr, nc);
        for r in 0..nr {
            for c in 0..nc {
                m[(r, c)] = self[(r0 + r, c0 + c)];
            }
        }
        m
    }

    pub fn set_sub_matrix(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Column-major flattening, the `vec` operator of Kronecker calculus.
    pub fn vectorize(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.rows * self.cols);
        for c in 0..self.cols {
            for r in 0..self.rows {
                v.push(self[(r, c)]);
            }
        }
        v
    }

    pub fn from_vectorized(v: &[C64], rows: usize, cols: usize) -> CMatrix {
        assert_eq!(v.len(), rows * cols);
        let mut m = CMatrix::zeros(rows, cols);
        let mut k = 0;
        for c in 0..cols {
            for r in 0..rows {
                m[(r, c)] = v[k];
                k += 1;
            }
        }
        m
    }

    /// Kronecker product `self (x) other`.
    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let mut m = CMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let s = self[(r1, c1)];
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        m[(r1 * other.rows + r2, c1 * other.cols + c2)] = s * other[(r2, c2)];
                    }
                }
            }
        }
        m
    }

    pub fn mat_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![zero(); self.rows];
        for r in 0..self.rows {
            let mut acc = zero();
            for c in 0..self.cols {
                acc += self[(r, c)] * v[c];
            }
            out[r] = acc;
        }
        out
    }

    /// LU factorization with partial pivoting. Returns the compact factors
    /// and the permutation; fails on pivots below `tol` relative to the
    /// largest entry.
    pub fn lu(&self, tol: f64) -> Result<Lu> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "LU of non-square {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = self.max_norm().max(1e-300);
        let mut sign_swaps = 0usize;
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].norm();
            for r in (k + 1)..n {
                let v = a[(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= tol * scale {
                return Err(Error::SingularMatrix(best / scale));
            }
            if p != k {
                for c in 0..n {
                    let tmp = a[(k, c)];
                    a[(k, c)] = a[(p, c)];
                    a[(p, c)] = tmp;
                }
                perm.swap(k, p);
                sign_swaps += 1;
            }
            let piv = a[(k, k)];
            for r in (k + 1)..n {
                let f = a[(r, k)] / piv;
                a[(r, k)] = f;
                for c in (k + 1)..n {
                    let akc = a[(k, c)];
                    a[(r, c)] -= f * akc;
                }
            }
        }
        Ok(Lu {
            lu: a,
            perm,
            sign_swaps,
        })
    }

    /// Solve `self * X = B` via LU.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let lu = self.lu(1e-14)?;
        lu.solve(b)
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        self.solve(&CMatrix::identity(self.rows))
    }

    pub fn det(&self) -> Result<C64> {
        let lu = self.lu(0.0).or_else(|e| match e {
            Error::SingularMatrix(_) => Err(Error::SingularMatrix(0.0)),
            other => Err(other),
        });
        match lu {
            Ok(f) => {
                let mut d = if f.sign_swaps % 2 == 0 { one() } else { -one() };
                for k in 0..self.rows {
                    d *= f.lu[(k, k)];
                }
                Ok(d)
            }
            Err(Error::SingularMatrix(_)) => Ok(zero()),
            Err(e) => Err(e),
        }
    }

    /// Estimate the smallest singular value by inverse power iteration on
    /// the normal equations, using LU solves. Returns 0 when singular.
    pub fn smallest_singular_value(&self) -> f64 {
        let n = self.rows;
        if n == 0 {
            return 0.0;
        }
        if n == 1 {
            return self[(0, 0)].norm();
        }
        let lu = match self.lu(1e-300) {
            Ok(f) => f,
            Err(_) => return 0.0,
        };
        // Power iteration on (A^-1)^H A^-1; 1/sqrt(rho) = sigma_min.
        let mut v: Vec<C64> = (0..n)
            .map(|i| C64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut norm_est = 0.0f64;
        for _ in 0..30 {
            let w = match lu.solve_vec(&v) {
                Ok(w) => w,
                Err(_) => return 0.0,
            };
            let u = match lu.solve_vec_conj_transpose(&w) {
                Ok(u) => u,
                Err(_) => return 0.0,
            };
            let nrm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm == 0.0 || !nrm.is_finite() {
                return 0.0;
            }
            let converged = (nrm - norm_est).abs() <= 1e-3 * nrm;
            norm_est = nrm;
            for (vi, ui) in v.iter_mut().zip(u.iter()) {
                *vi = *ui / nrm;
            }
            if converged {
                break;
            }
        }
        // norm_est approximates ||A^-H A^-1||_2 = 1/sigma_min^2.
        1.0 / norm_est.sqrt()
    }

    /// Condition number estimate in the 2-norm.
    pub fn condition_estimate(&self) -> f64 {
        let smin = self.smallest_singular_value();
        if smin == 0.0 {
            return f64::INFINITY;
        }
        // Largest singular value by power iteration on A^H A.
        let n = self.cols;
        let mut v: Vec<C64> = (0..n)
            .map(|i| C64::new((i as f64 * 0.9).cos(), 0.3 + (i as f64 * 0.4).sin()))
            .collect();
        let mut smax = 0.0f64;
        for _ in 0..30 {
            let av = self.mat_vec(&v);
            let ahav = self.conj_transpose().mat_vec(&av);
            let nrm = ahav.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm == 0.0 {
                return 0.0;
            }
            smax = nrm.sqrt();
            for (vi, ui) in v.iter_mut().zip(ahav.iter()) {
                *vi = *ui / nrm;
            }
        }
        smax / smin
    }

    /// Matrix power with a non-negative integer exponent.
    pub fn pow(&self, mut e: u32) -> CMatrix {
        assert!(self.is_square());
        let mut base = self.clone();
        let mut acc = CMatrix::identity(self.rows);
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
        m
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(rhs.data.iter()) {
            *a -= *b;
        }
        m
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale(-one())
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut m = CMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let s = self[(r, k)];
                if s == zero() {
                    continue;
                }
                for c in 0..rhs.cols {
                    m[(r, c)] += s * rhs[(k, c)];
                }
            }
        }
        m
    }
}

/// Compact LU factors with the row permutation.
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    sign_swaps: usize,
}

impl Lu {
    pub fn solve_vec(&self, b: &[C64]) -> Result<Vec<C64>> {
        let n = self.lu.rows;
        if b.len() != n {
            return Err(Error::DimensionMismatch("LU solve rhs".into()));
        }
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        // forward
        for r in 1..n {
            for c in 0..r {
                let f = self.lu[(r, c)];
                let xc = x[c];
                x[r] -= f * xc;
            }
        }
        // backward
        for r in (0..n).rev() {
            for c in (r + 1)..n {
                let f = self.lu[(r, c)];
                let xc = x[c];
                x[r] -= f * xc;
            }
            x[r] /= self.lu[(r, r)];
        }
        Ok(x)
    }

    /// Solve `A^H x = b` using the same factors.
    pub fn solve_vec_conj_transpose(&self, b: &[C64]) -> Result<Vec<C64>> {
        let n = self.lu.rows;
        // A = P^T L U  =>  A^H = U^H L^H P. Solve U^H y = b, L^H z = y, x = P^T z.
        let mut y = b.to_vec();
        for r in 0..n {
            for c in 0..r {
                let f = self.lu[(c, r)].conj();
                let yc = y[c];
                y[r] -= f * yc;
            }
            y[r] /= self.lu[(r, r)].conj();
        }
        for r in (0..n).rev() {
            for c in (r + 1)..n {
                let f = self.lu[(c, r)].conj();
                let yc = y[c];
                y[r] -= f * yc;
            }
        }
        let mut x = vec![zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        Ok(x)
    }

    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let n = self.lu.rows;
        if b.rows() != n {
            return Err(Error::DimensionMismatch("LU solve block rhs".into()));
        }
        let mut out = CMatrix::zeros(n, b.cols());
        for c in 0..b.cols() {
            let col = self.lu_column(b, c)?;
            for r in 0..n {
                out[(r, c)] = col[r];
            }
        }
        Ok(out)
    }

    fn lu_column(&self, b: &CMatrix, c: usize) -> Result<Vec<C64>> {
        let col: Vec<C64> = (0..b.rows()).map(|r| b[(r, c)]).collect();
        self.solve_vec(&col)
    }

    pub fn sign_swaps(&self) -> usize {
        self.sign_swaps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn solve_round_trip() {
        let a = CMatrix::from_rows(&[
            vec![c(2.0, 1.0), c(0.5, -0.3), c(0.0, 0.0)],
            vec![c(0.1, 0.0), c(-1.0, 2.0), c(0.7, 0.7)],
            vec![c(0.0, 0.4), c(0.2, 0.0), c(3.0, -1.0)],
        ]);
        let x = CMatrix::from_rows(&[
            vec![c(1.0, 0.0), c(0.0, 1.0)],
            vec![c(-2.0, 0.5), c(1.0, 1.0)],
            vec![c(0.3, 0.3), c(2.0, 0.0)],
        ]);
        let b = &a * &x;
        let x2 = a.solve(&b).unwrap();
        assert!((&x - &x2).norm() < 1e-12 * x.norm());
    }

    #[test]
    fn singular_rejected() {
        let a = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(4.0, 0.0)]]);
        assert!(a.inverse().is_err());
        assert!(a.smallest_singular_value() < 1e-12);
    }

    #[test]
    fn sigma_min_2x2_known() {
        // diag(3, 0.25): singular values are 3 and 0.25.
        let a = CMatrix::diag(&[c(3.0, 0.0), c(0.25, 0.0)]);
        let s = a.smallest_singular_value();
        assert!((s - 0.25).abs() < 1e-8, "sigma_min = {s}");
        let cond = a.condition_estimate();
        assert!((cond - 12.0).abs() < 1e-6, "cond = {cond}");
    }

    #[test]
    fn kron_vectorize_identity() {
        // vec(A X B) = (B^T (x) A) vec(X)
        let a = CMatrix::from_rows(&[vec![c(1.0, 1.0), c(0.0, 2.0)], vec![c(0.5, 0.0), c(1.0, -1.0)]]);
        let b = CMatrix::from_rows(&[vec![c(2.0, 0.0), c(1.0, 0.5)], vec![c(0.0, 1.0), c(1.0, 0.0)]]);
        let x = CMatrix::from_rows(&[vec![c(1.0, -1.0), c(2.0, 0.0)], vec![c(0.0, 0.5), c(1.0, 1.0)]]);
        let lhs = (&(&a * &x) * &b).vectorize();
        let op = b.transpose().kron(&a);
        let rhs = op.mat_vec(&x.vectorize());
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            assert!((l - r).norm() < 1e-13);
        }
    }

    #[test]
    fn det_and_pow() {
        let a = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(2.0, 0.0)]]);
        assert!((a.det().unwrap() - c(2.0, 0.0)).norm() < 1e-14);
        let a3 = a.pow(3);
        assert!((a3[(1, 1)] - c(8.0, 0.0)).norm() < 1e-14);
        assert!((a3[(0, 1)] - c(7.0, 0.0)).norm() < 1e-14);
    }
}
