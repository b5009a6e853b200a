//! Logarithm and exponential of unipotent / nilpotent block matrices.
//!
//! With respect to a slope-block structure with `k` blocks, a strictly
//! block-upper-triangular matrix is nilpotent of index at most `k`, so
//! `log(I + N) = sum_{p>=1} ((-1)^{p-1}/p) N^p` and the exponential series
//! both terminate after `k - 1` terms exactly.

use crate::error::{Error, Result};
use crate::matrix::{CMatrix, one};
use crate::structure::BlockStructure;

/// Largest deviation of `m` from the identity outside the strict
/// block-upper-triangle (diagonal blocks compared against `I`).
pub fn unipotent_deviation(m: &CMatrix, s: &BlockStructure) -> f64 {
    let mut dev: f64 = 0.0;
    let n = s.size();
    assert_eq!(m.rows(), n);
    assert_eq!(m.cols(), n);
    for r in 0..n {
        for c in 0..n {
            let bi = s.block_of(r);
            let bj = s.block_of(c);
            if bj > bi {
                continue;
            }
            let expected = if r == c { one() } else { crate::matrix::zero() };
            dev = dev.max((m[(r, c)] - expected).norm());
        }
    }
    dev
}

/// Largest entry of `m` outside the strict block-upper-triangle.
pub fn nilpotent_deviation(m: &CMatrix, s: &BlockStructure) -> f64 {
    let mut dev: f64 = 0.0;
    let n = s.size();
    for r in 0..n {
        for c in 0..n {
            if s.block_of(c) > s.block_of(r) {
                continue;
            }
            dev = dev.max(m[(r, c)].norm());
        }
    }
    dev
}

/// Logarithm of a unipotent block matrix; the series terminates after
/// `k - 1` terms.
pub fn log_unipotent(m: &CMatrix, s: &BlockStructure) -> Result<CMatrix> {
    let scale = m.max_norm().max(1.0);
    let dev = unipotent_deviation(m, s);
    if dev > 1e-9 * scale {
        return Err(Error::NotUnipotent(dev));
    }
    let n = s.size();
    let nil = m - &CMatrix::identity(n);
    let mut acc = CMatrix::zeros(n, n);
    let mut term = nil.clone();
    for p in 1..s.block_count() {
        let coeff = if p % 2 == 1 { 1.0 } else { -1.0 } / p as f64;
        acc = &acc + &term.scale(crate::matrix::C64::new(coeff, 0.0));
        term = &term * &nil;
    }
    Ok(acc)
}

/// Exponential of a nilpotent block matrix; finite series.
pub fn exp_nilpotent(nmat: &CMatrix, s: &BlockStructure) -> Result<CMatrix> {
    let scale = nmat.max_norm().max(1.0);
    let dev = nilpotent_deviation(nmat, s);
    if dev > 1e-9 * scale {
        return Err(Error::NotNilpotent(dev));
    }
    let n = s.size();
    let mut acc = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    let mut fact = 1.0;
    for p in 1..s.block_count() {
        term = &term * nmat;
        fact *= p as f64;
        acc = &acc + &term.scale(crate::matrix::C64::new(1.0 / fact, 0.0));
    }
    Ok(acc)
}

/// Logarithm of a unipotent matrix without a block structure: the series is
/// run until the nilpotent power vanishes, failing if it does not within the
/// matrix dimension.
pub fn log_unipotent_general(m: &CMatrix) -> Result<CMatrix> {
    let n = m.rows();
    let nil = m - &CMatrix::identity(n);
    let scale = m.max_norm().max(1.0);
    let mut acc = CMatrix::zeros(n, n);
    let mut term = nil.clone();
    for p in 1..=n {
        if term.max_norm() <= 1e-13 * scale {
            return Ok(acc);
        }
        let coeff = if p % 2 == 1 { 1.0 } else { -1.0 } / p as f64;
        acc = &acc + &term.scale(crate::matrix::C64::new(coeff, 0.0));
        term = &term * &nil;
    }
    if term.max_norm() <= 1e-8 * scale {
        Ok(acc)
    } else {
        Err(Error::NotUnipotent(term.max_norm()))
    }
}

/// Exponential of a nilpotent matrix without a block structure.
pub fn exp_nilpotent_general(nmat: &CMatrix) -> Result<CMatrix> {
    let n = nmat.rows();
    let scale = nmat.max_norm().max(1.0);
    let mut acc = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    let mut fact = 1.0;
    for p in 1..=n {
        term = &term * nmat;
        if term.max_norm() <= 1e-13 * scale && p > 1 {
            return Ok(acc);
        }
        fact *= p as f64;
        acc = &acc + &term.scale(crate::matrix::C64::new(1.0 / fact, 0.0));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{zero, C64};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_blocks() -> BlockStructure {
        BlockStructure::new(vec![0, 1], vec![1, 1]).unwrap()
    }

    #[test]
    fn log_identity_is_zero() {
        let s = two_blocks();
        let l = log_unipotent(&CMatrix::identity(2), &s).unwrap();
        assert!(l.norm() == 0.0);
    }

    #[test]
    fn log_two_block() {
        let s = two_blocks();
        let m = CMatrix::from_rows(&[vec![one_c(), c(0.7, -0.2)], vec![zero(), one_c()]]);
        let l = log_unipotent(&m, &s).unwrap();
        assert!((l[(0, 1)] - c(0.7, -0.2)).norm() < 1e-15);
        assert!(l[(0, 0)].norm() < 1e-15 && l[(1, 1)].norm() < 1e-15);
    }

    fn one_c() -> C64 {
        c(1.0, 0.0)
    }

    #[test]
    fn exp_log_round_trip_three_blocks() {
        let s = BlockStructure::new(vec![0, 1, 3], vec![1, 2, 1]).unwrap();
        let mut m = CMatrix::identity(4);
        m[(0, 1)] = c(0.3, 0.1);
        m[(0, 2)] = c(-1.0, 0.0);
        m[(0, 3)] = c(0.2, 2.0);
        m[(1, 3)] = c(1.5, -0.5);
        m[(2, 3)] = c(0.0, 0.25);
        let l = log_unipotent(&m, &s).unwrap();
        let back = exp_nilpotent(&l, &s).unwrap();
        assert!((&back - &m).max_norm() < 1e-12);
    }

    #[test]
    fn non_unipotent_rejected() {
        let s = two_blocks();
        let m = CMatrix::from_rows(&[vec![c(2.0, 0.0), zero()], vec![zero(), one_c()]]);
        assert!(matches!(log_unipotent(&m, &s), Err(Error::NotUnipotent(_))));
        let n = CMatrix::from_rows(&[vec![c(0.5, 0.0), zero()], vec![zero(), zero()]]);
        assert!(matches!(exp_nilpotent(&n, &s), Err(Error::NotNilpotent(_))));
    }

    #[test]
    fn general_unipotent_jordan() {
        let j = CMatrix::from_rows(&[vec![one_c(), c(2.0, 0.0)], vec![zero(), one_c()]]);
        let l = log_unipotent_general(&j).unwrap();
        assert!((l[(0, 1)] - c(2.0, 0.0)).norm() < 1e-14);
        let e = exp_nilpotent_general(&l.scale(c(0.5, 0.0))).unwrap();
        assert!((e[(0, 1)] - c(1.0, 0.0)).norm() < 1e-14);
    }
}
