//! Parametric Sylvester solver.
//!
//! The directional summation reduces, Laurent coefficient by Laurent
//! coefficient, to equations
//!
//! ```text
//! lambda * X * A_j - A_i * X = V
//! ```
//!
//! with constant invertible `A_i`, `A_j` and a scalar `lambda` running over
//! `c^delta q^n`. The operator is invertible exactly when
//! `Sp(lambda A_j)` and `Sp(A_i)` are disjoint (non-resonance). Block sizes
//! stay small here, so we solve the full Kronecker vectorization
//! `(lambda A_j^T (x) I - I (x) A_i) vec(X) = vec(V)` by LU and certify the
//! residual; the smallest singular value of the lifted operator is the
//! resonance detector.

use crate::error::{Error, Result};
use crate::matrix::{C64, CMatrix};

/// Relative threshold under which the lifted operator counts as resonant.
pub const RESONANCE_SIGMA_TOL: f64 = 1e-10;

/// Build the vectorized operator `lambda A_j^T (x) I_{r_i} - I_{r_j} (x) A_i`.
pub fn lifted_operator(lambda: C64, a_j: &CMatrix, a_i: &CMatrix) -> CMatrix {
    let ri = a_i.rows();
    let rj = a_j.rows();
    let left = a_j.transpose().scale(lambda).kron(&CMatrix::identity(ri));
    let right = CMatrix::identity(rj).kron(a_i);
    &left - &right
}

/// Solve `lambda X A_j - A_i X = V` for the unique `X`.
pub fn sylvester_solve(lambda: C64, a_j: &CMatrix, a_i: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    if !a_i.is_square() || !a_j.is_square() {
        return Err(Error::DimensionMismatch("Sylvester blocks must be square".into()));
    }
    let ri = a_i.rows();
    let rj = a_j.rows();
    if v.rows() != ri || v.cols() != rj {
        return Err(Error::DimensionMismatch(format!(
            "Sylvester rhs is {}x{}, expected {}x{}",
            v.rows(),
            v.cols(),
            ri,
            rj
        )));
    }
    if ri == 1 && rj == 1 {
        // scalar shortcut: the lifted operator is the number itself
        let denom = lambda * a_j[(0, 0)] - a_i[(0, 0)];
        let scale = lambda.norm() * a_j[(0, 0)].norm() + a_i[(0, 0)].norm();
        if denom.norm() <= RESONANCE_SIGMA_TOL * scale.max(1e-300) {
            return Err(Error::ResonantSylvester {
                lambda,
                sigma_min: denom.norm(),
            });
        }
        return Ok(CMatrix::scalar(v[(0, 0)] / denom));
    }
    let op = lifted_operator(lambda, a_j, a_i);
    let scale = lambda.norm() * a_j.max_norm() + a_i.max_norm();
    let sigma_min = op.smallest_singular_value();
    if sigma_min <= RESONANCE_SIGMA_TOL * scale.max(1e-300) {
        return Err(Error::ResonantSylvester { lambda, sigma_min });
    }
    let x_vec = op.lu(1e-14)?.solve_vec(&v.vectorize())?;
    let x = CMatrix::from_vectorized(&x_vec, ri, rj);
    debug_assert!(
        residual(lambda, a_j, a_i, v, &x)
            <= 1e-10
                * (lambda.norm() * x.norm() * a_j.norm() + a_i.norm() * x.norm() + v.norm())
                    .max(1e-300),
        "Sylvester residual out of tolerance"
    );
    Ok(x)
}

/// `|| lambda X A_j - A_i X - V ||` (Frobenius).
pub fn residual(lambda: C64, a_j: &CMatrix, a_i: &CMatrix, v: &CMatrix, x: &CMatrix) -> f64 {
    let lhs = &(x * a_j).scale(lambda) - &(a_i * x);
    (&lhs - v).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::one;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> C64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_case() {
        // lambda=3, A_j=(2), A_i=(1), V=(5): 3*x*2 - x = 5 => x = 1.
        let x = sylvester_solve(
            c(3.0, 0.0),
            &CMatrix::scalar(c(2.0, 0.0)),
            &CMatrix::scalar(c(1.0, 0.0)),
            &CMatrix::scalar(c(5.0, 0.0)),
        )
        .unwrap();
        assert!((x[(0, 0)] - one()).norm() < 1e-14);
    }

    #[test]
    fn resonant_identity_pair() {
        // lambda=1, A_j = A_i = I: spectrum overlap, singular operator.
        let i2 = CMatrix::identity(2);
        let v = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]);
        match sylvester_solve(one(), &i2, &i2, &v) {
            Err(Error::ResonantSylvester { .. }) => {}
            other => panic!("expected ResonantSylvester, got {other:?}"),
        }
    }

    #[test]
    fn two_by_two_against_kron_oracle() {
        // Oracle: build the 4x4 vectorized system explicitly and LU-solve it.
        let a_i = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(2.0, 0.0)]]);
        let a_j = CMatrix::from_rows(&[vec![c(3.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]);
        let lambda = c(0.2, 0.0);
        let v = CMatrix::from_rows(&[vec![one(), one()], vec![one(), one()]]);

        let op = lifted_operator(lambda, &a_j, &a_i);
        let oracle_vec = op.lu(1e-14).unwrap().solve_vec(&v.vectorize()).unwrap();
        let oracle = CMatrix::from_vectorized(&oracle_vec, 2, 2);

        let x = sylvester_solve(lambda, &a_j, &a_i, &v).unwrap();
        assert!((&x - &oracle).norm() < 1e-12);
        assert!(residual(lambda, &a_j, &a_i, &v, &x) < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = CMatrix::identity(2);
        let v = CMatrix::zeros(3, 2);
        assert!(matches!(
            sylvester_solve(one(), &a, &a, &v),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
