//! Matrix-valued truncated Laurent series.
//!
//! A series carries a degree window `[n_min, n_max]` together with two
//! exactness flags: `exact_below` (all coefficients below the window are
//! genuinely zero) and `exact_above` (same above). Laurent polynomials carry
//! both flags; theta expansions carry neither until their tails have been
//! certified below threshold, after which they are promoted to
//! "numerically complete".
//!
//! Every arithmetic operation records the sub-window on which its output is
//! exact given exact inputs; degrees that could receive contributions from
//! truncated coefficients are dropped. Summations run in ascending degree so
//! results are bitwise deterministic.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{C64, CMatrix};

/// Tail magnitude (relative to the largest coefficient) below which a
/// truncated series may be promoted to numerically complete.
pub const COMPLETION_THRESHOLD: f64 = 1e-16;

#[derive(Clone, Debug)]
pub struct TruncatedLaurentSeries {
    n_min: i64,
    coeffs: Vec<CMatrix>,
    rows: usize,
    cols: usize,
    exact_below: bool,
    exact_above: bool,
}

impl TruncatedLaurentSeries {
    /// Series with the given window, all coefficients zero, exact on both
    /// sides (the zero polynomial on that window).
    pub fn zeros(n_min: i64, n_max: i64, rows: usize, cols: usize) -> Self {
        assert!(n_min <= n_max);
        let len = (n_max - n_min + 1) as usize;
        TruncatedLaurentSeries {
            n_min,
            coeffs: vec![CMatrix::zeros(rows, cols); len],
            rows,
            cols,
            exact_below: true,
            exact_above: true,
        }
    }

    /// Scalar Laurent polynomial from `(degree, value)` pairs.
    pub fn scalar_poly(terms: &[(i64, C64)]) -> Self {
        assert!(!terms.is_empty());
        let n_min = terms.iter().map(|t| t.0).min().unwrap();
        let n_max = terms.iter().map(|t| t.0).max().unwrap();
        let mut s = TruncatedLaurentSeries::zeros(n_min, n_max, 1, 1);
        for &(d, v) in terms {
            s.coeff_mut(d)[(0, 0)] += v;
        }
        s
    }

    /// The constant scalar `1`.
    pub fn scalar_one() -> Self {
        Self::scalar_poly(&[(0, C64::new(1.0, 0.0))])
    }

    /// Monomial `z^d * M`.
    pub fn monomial(d: i64, m: CMatrix) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        let mut s = TruncatedLaurentSeries::zeros(d, d, rows, cols);
        s.set_coeff(d, m);
        s
    }

    /// Build from explicit coefficients on a window; both sides truncated.
    pub fn from_window(n_min: i64, coeffs: Vec<CMatrix>) -> Self {
        assert!(!coeffs.is_empty());
        let rows = coeffs[0].rows();
        let cols = coeffs[0].cols();
        assert!(coeffs.iter().all(|c| c.rows() == rows && c.cols() == cols));
        TruncatedLaurentSeries {
            n_min,
            coeffs,
            rows,
            cols,
            exact_below: false,
            exact_above: false,
        }
    }

    pub fn n_min(&self) -> i64 {
        self.n_min
    }

    pub fn n_max(&self) -> i64 {
        self.n_min + self.coeffs.len() as i64 - 1
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_exact_below(&self) -> bool {
        self.exact_below
    }

    pub fn is_exact_above(&self) -> bool {
        self.exact_above
    }

    /// Declare the series a Laurent polynomial: exact outside the window.
    pub fn mark_exact(mut self) -> Self {
        self.exact_below = true;
        self.exact_above = true;
        self
    }

    pub fn mark_truncated(mut self) -> Self {
        self.exact_below = false;
        self.exact_above = false;
        self
    }

    /// Forget exactness above the window (the series is truncated there).
    pub fn demote_above(mut self) -> Self {
        self.exact_above = false;
        self
    }

    /// Forget exactness below the window.
    pub fn demote_below(mut self) -> Self {
        self.exact_below = false;
        self
    }

    /// Promote to numerically complete when both edge coefficients are below
    /// `threshold` relative to the largest coefficient.
    pub fn promote_if_certified(mut self, threshold: f64) -> Self {
        let peak = self.max_coeff_norm().max(1e-300);
        let lo = self.coeffs.first().map(|c| c.max_norm()).unwrap_or(0.0);
        let hi = self.coeffs.last().map(|c| c.max_norm()).unwrap_or(0.0);
        if lo <= threshold * peak {
            self.exact_below = true;
        }
        if hi <= threshold * peak {
            self.exact_above = true;
        }
        self
    }

    pub fn coeff(&self, d: i64) -> Option<&CMatrix> {
        if d < self.n_min || d > self.n_max() {
            None
        } else {
            Some(&self.coeffs[(d - self.n_min) as usize])
        }
    }

    /// Coefficient at degree `d`, a zero matrix when outside the window.
    pub fn coeff_or_zero(&self, d: i64) -> CMatrix {
        self.coeff(d)
            .cloned()
            .unwrap_or_else(|| CMatrix::zeros(self.rows, self.cols))
    }

    pub fn coeff_mut(&mut self, d: i64) -> &mut CMatrix {
        assert!(d >= self.n_min && d <= self.n_max(), "degree out of window");
        let idx = (d - self.n_min) as usize;
        &mut self.coeffs[idx]
    }

    pub fn set_coeff(&mut self, d: i64, m: CMatrix) {
        assert_eq!((m.rows(), m.cols()), (self.rows, self.cols));
        *self.coeff_mut(d) = m;
    }

    pub fn degrees(&self) -> impl Iterator<Item = i64> {
        self.n_min..=self.n_max()
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.max_norm()).fold(0.0, f64::max)
    }

    /// Drop zero margins of exact series (keeps at least one coefficient).
    pub fn trimmed(mut self) -> Self {
        if self.exact_below {
            while self.coeffs.len() > 1 && self.coeffs[0].max_norm() == 0.0 {
                self.coeffs.remove(0);
                self.n_min += 1;
            }
        }
        if self.exact_above {
            while self.coeffs.len() > 1 && self.coeffs.last().unwrap().max_norm() == 0.0 {
                self.coeffs.pop();
            }
        }
        self
    }

    /// Restrict to a sub-window (intersection; errors when empty).
    pub fn restricted(&self, n_min: i64, n_max: i64) -> Result<Self> {
        let lo = n_min.max(self.n_min);
        let hi = n_max.min(self.n_max());
        if lo > hi {
            return Err(Error::EmptyWindow);
        }
        let mut s = TruncatedLaurentSeries::zeros(lo, hi, self.rows, self.cols);
        for d in lo..=hi {
            s.set_coeff(d, self.coeff_or_zero(d));
        }
        s.exact_below = self.exact_below && lo == self.n_min;
        s.exact_above = self.exact_above && hi == self.n_max();
        Ok(s)
    }

    pub fn scale(&self, f: C64) -> Self {
        let mut s = self.clone();
        for c in &mut s.coeffs {
            *c = c.scale(f);
        }
        s
    }

    /// Multiply by the monomial `z^d`.
    pub fn shift(&self, d: i64) -> Self {
        let mut s = self.clone();
        s.n_min += d;
        s
    }

    /// Coefficient map `f_n -> q^n f_n`, i.e. `f(z) -> f(qz)`. Window and
    /// exactness are untouched.
    pub fn sigma_q(&self, q: C64) -> Self {
        let mut s = self.clone();
        for d in s.n_min..=s.n_max() {
            let factor = q.powi(d as i32);
            let idx = (d - s.n_min) as usize;
            s.coeffs[idx] = s.coeffs[idx].scale(factor);
        }
        s
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "series add {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        // The sum is exact where both are known or known-zero.
        let lo_exact = |s: &Self| if s.exact_below { i64::MIN / 4 } else { s.n_min };
        let hi_exact = |s: &Self| if s.exact_above { i64::MAX / 4 } else { s.n_max() };
        let lo = lo_exact(self).max(lo_exact(other));
        let hi = hi_exact(self).min(hi_exact(other));
        let win_lo = lo.max(self.n_min.min(other.n_min));
        let win_hi = hi.min(self.n_max().max(other.n_max()));
        if win_lo > win_hi {
            return Err(Error::EmptyWindow);
        }
        let mut s = TruncatedLaurentSeries::zeros(win_lo, win_hi, self.rows, self.cols);
        for d in win_lo..=win_hi {
            s.set_coeff(d, &self.coeff_or_zero(d) + &other.coeff_or_zero(d));
        }
        s.exact_below = self.exact_below && other.exact_below;
        s.exact_above = self.exact_above && other.exact_above;
        Ok(s.trimmed())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Cauchy product on the exactly-determined sub-window.
    ///
    /// Degree `m` of the product is kept only when every contribution
    /// `f_k g_{m-k}` with `k` outside the window of `f` (or `m-k` outside the
    /// window of `g`) is known to vanish through the exactness flags.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "series mul {:?} * {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut lo = self.n_min + other.n_min;
        let mut hi = self.n_max() + other.n_max();
        if !self.exact_above {
            hi = hi.min(self.n_max() + other.n_min);
        }
        if !other.exact_above {
            hi = hi.min(other.n_max() + self.n_min);
        }
        if !self.exact_below {
            lo = lo.max(self.n_min + other.n_max());
        }
        if !other.exact_below {
            lo = lo.max(other.n_min + self.n_max());
        }
        if lo > hi {
            return Err(Error::EmptyWindow);
        }
        let mut s = TruncatedLaurentSeries::zeros(lo, hi, self.rows, other.cols);
        for m in lo..=hi {
            let mut acc = CMatrix::zeros(self.rows, other.cols);
            let k_lo = self.n_min.max(m - other.n_max());
            let k_hi = self.n_max().min(m - other.n_min);
            for k in k_lo..=k_hi {
                let fk = self.coeff(k).unwrap();
                let gk = other.coeff(m - k).unwrap();
                acc = &acc + &(fk * gk);
            }
            s.set_coeff(m, acc);
        }
        s.exact_below = self.exact_below && other.exact_below;
        s.exact_above = self.exact_above && other.exact_above;
        Ok(s)
    }

    /// Evaluate at `z` by summation in ascending degree; also returns the
    /// tail magnitude of the last kept coefficients as a truncation
    /// diagnostic (zero for exact polynomials).
    pub fn eval_with_tail(&self, z: C64) -> Result<(CMatrix, f64)> {
        if z.norm() == 0.0 {
            return Err(Error::ZeroArgument("series evaluated at 0".into()));
        }
        let mut acc = CMatrix::zeros(self.rows, self.cols);
        for d in self.n_min..=self.n_max() {
            let w = z.powi(d as i32);
            acc = &acc + &self.coeff(d).unwrap().scale(w);
        }
        let mut tail = 0.0f64;
        if !self.exact_below {
            tail = tail.max(self.coeffs[0].max_norm() * z.norm().powi(self.n_min as i32));
        }
        if !self.exact_above {
            tail = tail.max(
                self.coeffs.last().unwrap().max_norm() * z.norm().powi(self.n_max() as i32),
            );
        }
        Ok((acc, tail))
    }

    pub fn eval(&self, z: C64) -> Result<CMatrix> {
        Ok(self.eval_with_tail(z)?.0)
    }

    /// Extract the scalar entry `(r, c)` as a scalar series.
    pub fn entry(&self, r: usize, c: usize) -> TruncatedLaurentSeries {
        let mut s = TruncatedLaurentSeries::zeros(self.n_min, self.n_max(), 1, 1);
        for d in self.n_min..=self.n_max() {
            s.coeff_mut(d)[(0, 0)] = self.coeff(d).unwrap()[(r, c)];
        }
        s.exact_below = self.exact_below;
        s.exact_above = self.exact_above;
        s
    }

    /// Frobenius-style norm over all coefficients.
    pub fn norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// Overflow-safe coefficient record: natural logs of moduli plus unit
/// phases, for growth analysis of q-Gevrey sequences whose raw values
/// overflow doubles.
#[derive(Clone, Debug)]
pub struct ScaledCoefficientTrack {
    pub n_min: i64,
    pub log_magnitudes: Vec<f64>,
    pub phases: Vec<Complex64>,
}

impl ScaledCoefficientTrack {
    pub fn from_series_entry(s: &TruncatedLaurentSeries, r: usize, c: usize) -> Self {
        let mut log_magnitudes = Vec::new();
        let mut phases = Vec::new();
        for d in s.n_min()..=s.n_max() {
            let v = s.coeff(d).unwrap()[(r, c)];
            let m = v.norm();
            if m > 0.0 {
                log_magnitudes.push(m.ln());
                phases.push(v / m);
            } else {
                log_magnitudes.push(f64::NEG_INFINITY);
                phases.push(Complex64::new(1.0, 0.0));
            }
        }
        ScaledCoefficientTrack {
            n_min: s.n_min(),
            log_magnitudes,
            phases,
        }
    }

    /// Synthesize a track directly from log-magnitudes (phases all 1).
    pub fn synthetic(n_min: i64, log_magnitudes: Vec<f64>) -> Self {
        let phases = vec![Complex64::new(1.0, 0.0); log_magnitudes.len()];
        ScaledCoefficientTrack {
            n_min,
            log_magnitudes,
            phases,
        }
    }

    pub fn len(&self) -> usize {
        self.log_magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_magnitudes.is_empty()
    }

    /// Degrees with finite magnitude.
    pub fn finite_points(&self) -> Vec<(i64, f64)> {
        self.log_magnitudes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_finite())
            .map(|(i, &m)| (self.n_min + i as i64, m))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn poly_product() {
        // (1 + z)(1 - z) = 1 - z^2
        let a = TruncatedLaurentSeries::scalar_poly(&[(0, c(1.0, 0.0)), (1, c(1.0, 0.0))]);
        let b = TruncatedLaurentSeries::scalar_poly(&[(0, c(1.0, 0.0)), (1, c(-1.0, 0.0))]);
        let p = a.mul(&b).unwrap();
        assert_eq!(p.n_min(), 0);
        assert_eq!(p.n_max(), 2);
        assert!((p.coeff(0).unwrap()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(p.coeff(1).unwrap()[(0, 0)].norm() < 1e-15);
        assert!((p.coeff(2).unwrap()[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn laurent_inverse_monomials() {
        // z^{-1} * z = 1
        let a = TruncatedLaurentSeries::scalar_poly(&[(-1, c(1.0, 0.0))]);
        let b = TruncatedLaurentSeries::scalar_poly(&[(1, c(1.0, 0.0))]);
        let p = a.mul(&b).unwrap();
        assert_eq!((p.n_min(), p.n_max()), (0, 0));
        assert!((p.coeff(0).unwrap()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn truncated_window_shrinks() {
        // Two both-sides-truncated series on [-2, 2]: only degree 0 is safe.
        let a = TruncatedLaurentSeries::zeros(-2, 2, 1, 1).mark_truncated();
        let b = TruncatedLaurentSeries::zeros(-2, 2, 1, 1).mark_truncated();
        let p = a.mul(&b).unwrap();
        assert_eq!((p.n_min(), p.n_max()), (0, 0));
        // polynomial times truncated: window shifts but keeps width
        let poly = TruncatedLaurentSeries::scalar_poly(&[(1, c(2.0, 0.0))]);
        let p2 = poly.mul(&a).unwrap();
        assert_eq!((p2.n_min(), p2.n_max()), (-1, 3));
    }

    #[test]
    fn empty_window_error() {
        let a = TruncatedLaurentSeries::zeros(0, 1, 1, 1).mark_truncated();
        let b = TruncatedLaurentSeries::zeros(0, 5, 1, 1).mark_truncated();
        assert!(matches!(a.mul(&b), Err(Error::EmptyWindow)));
    }

    #[test]
    fn sigma_q_scales_coefficients() {
        let q = c(1.0, 1.0);
        let mut s = TruncatedLaurentSeries::zeros(-2, 2, 1, 1);
        for d in -2..=2 {
            s.coeff_mut(d)[(0, 0)] = c(1.0, 0.0);
        }
        let t = s.sigma_q(q);
        for d in -2..=2i64 {
            let expect = q.powi(d as i32);
            assert!((t.coeff(d).unwrap()[(0, 0)] - expect).norm() < 1e-14);
        }
        // pointwise check f(q z0) = (sigma_q f)(z0)
        let z0 = c(0.3, 0.0);
        let lhs = s.eval(q * z0).unwrap()[(0, 0)];
        let rhs = t.eval(z0).unwrap()[(0, 0)];
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn eval_examples() {
        let s = TruncatedLaurentSeries::scalar_poly(&[(0, c(1.0, 0.0)), (1, c(1.0, 0.0))]);
        assert!((s.eval(c(2.0, 0.0)).unwrap()[(0, 0)] - c(3.0, 0.0)).norm() < 1e-15);
        let zinv = TruncatedLaurentSeries::scalar_poly(&[(-1, c(1.0, 0.0))]);
        assert!((zinv.eval(c(0.5, 0.0)).unwrap()[(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
        assert!(zinv.eval(c(0.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn schoolbook_convolution_oracle(
            fa in proptest::collection::vec(-3.0f64..3.0, 6),
            fb in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let a = TruncatedLaurentSeries::scalar_poly(
                &fa.iter().enumerate().map(|(i, &v)| (i as i64, c(v, 0.5 * v))).collect::<Vec<_>>(),
            );
            let b = TruncatedLaurentSeries::scalar_poly(
                &fb.iter().enumerate().map(|(i, &v)| (i as i64, c(v, -v))).collect::<Vec<_>>(),
            );
            let p = a.mul(&b).unwrap();
            for m in 0..=10i64 {
                let mut acc = c(0.0, 0.0);
                for k in 0..=m {
                    if k < 6 && (m - k) < 6 {
                        acc += c(fa[k as usize], 0.5 * fa[k as usize]) * c(fb[(m - k) as usize], -fb[(m - k) as usize]);
                    }
                }
                let got = p.coeff_or_zero(m)[(0, 0)];
                prop_assert!((got - acc).norm() < 1e-12);
            }
        }

        #[test]
        fn mul_associative_and_distributive(
            fa in proptest::collection::vec(-2.0f64..2.0, 4),
            fb in proptest::collection::vec(-2.0f64..2.0, 4),
            fc_ in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let mk = |v: &[f64], s: f64| TruncatedLaurentSeries::scalar_poly(
                &v.iter().enumerate().map(|(i, &x)| (i as i64 - 2, c(x, s * x))).collect::<Vec<_>>(),
            );
            let a = mk(&fa, 0.2);
            let b = mk(&fb, -0.7);
            let cc = mk(&fc_, 1.0);
            let left = a.mul(&b).unwrap().mul(&cc).unwrap();
            let right = a.mul(&b.mul(&cc).unwrap()).unwrap();
            for d in left.degrees() {
                prop_assert!((left.coeff_or_zero(d)[(0,0)] - right.coeff_or_zero(d)[(0,0)]).norm() < 1e-12);
            }
            let dist_l = a.mul(&b.add(&cc).unwrap()).unwrap();
            let dist_r = a.mul(&b).unwrap().add(&a.mul(&cc).unwrap()).unwrap();
            for d in dist_l.degrees() {
                prop_assert!((dist_l.coeff_or_zero(d)[(0,0)] - dist_r.coeff_or_zero(d)[(0,0)]).norm() < 1e-12);
            }
        }

        #[test]
        fn sigma_q_is_multiplicative(
            fa in proptest::collection::vec(-2.0f64..2.0, 4),
            fb in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let q = c(1.3, 0.4);
            let mk = |v: &[f64]| TruncatedLaurentSeries::scalar_poly(
                &v.iter().enumerate().map(|(i, &x)| (i as i64 - 1, c(x, x))).collect::<Vec<_>>(),
            );
            let a = mk(&fa);
            let b = mk(&fb);
            let lhs = a.mul(&b).unwrap().sigma_q(q);
            let rhs = a.sigma_q(q).mul(&b.sigma_q(q)).unwrap();
            for d in lhs.degrees() {
                prop_assert!((lhs.coeff_or_zero(d)[(0,0)] - rhs.coeff_or_zero(d)[(0,0)]).norm() < 1e-12);
            }
        }
    }
}
