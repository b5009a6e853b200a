//! The Jacobi theta function of the q-spiral calculus.
//!
//! We realize theta as the bilateral series
//!
//! ```text
//! theta(z) = sum_{n in Z} q^{-n(n+1)/2} z^n ,
//! ```
//!
//! which satisfies the functional equation `theta(qz) = z theta(z)` and has
//! simple zeros exactly on the spiral `[-1; q] = -q^Z` (Jacobi triple
//! product). Translates `theta_c(z) = theta(z/c)` then have zeros on
//! `[-c; q]` and obey `theta_c(qz) = (z/c) theta_c(z)`. The Gaussian decay
//! of the coefficients makes truncation cheap to certify: the context
//! widens its window until the edge coefficients fall below 1e-16 of the
//! central one.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::{C64, CMatrix};
use crate::series::TruncatedLaurentSeries;

/// Edge-decay certificate required of a theta window.
const EDGE_REL: f64 = 1e-16;

#[derive(Clone, Debug)]
pub struct ThetaContext {
    q: C64,
    half_width: i64,
}

impl ThetaContext {
    /// Default half-width before auto-widening.
    pub const DEFAULT_HALF_WIDTH: i64 = 30;

    pub fn new(q: C64) -> Result<Self> {
        Self::with_half_width(q, Self::DEFAULT_HALF_WIDTH)
    }

    pub fn with_half_width(q: C64, half_width: i64) -> Result<Self> {
        if !(q.re.is_finite() && q.im.is_finite()) {
            return Err(Error::NonFinite("theta modulus q".into()));
        }
        if q.norm() <= 1.0 + 1e-6 {
            return Err(Error::InvalidSystem(format!(
                "|q| = {} must exceed 1 + 1e-6",
                q.norm()
            )));
        }
        let mut w = half_width.max(1);
        // widen until the edge coefficients are negligible against theta_0 = 1
        while theta_coeff_q(q, w).norm().max(theta_coeff_q(q, -w).norm()) > EDGE_REL {
            w *= 2;
            if w > 1 << 20 {
                return Err(Error::WindowExhausted(
                    "theta window would exceed 2^20 coefficients".into(),
                ));
            }
        }
        Ok(ThetaContext { q, half_width: w })
    }

    pub fn q(&self) -> C64 {
        self.q
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }
}

fn theta_coeff_q(q: C64, n: i64) -> C64 {
    // q^{-n(n+1)/2}; the exponent is an exact integer, and coefficients for
    // n and -n-1 coincide bitwise.
    let e = n * (n + 1) / 2;
    q.powi(-e as i32)
}

/// Laurent coefficient of theta: `q^{-n(n+1)/2}`.
pub fn theta_coeff(ctx: &ThetaContext, n: i64) -> C64 {
    theta_coeff_q(ctx.q, n)
}

/// Evaluate theta at `z` by direct bilateral summation in ascending degree.
pub fn theta_eval(ctx: &ThetaContext, z: C64) -> Result<C64> {
    if z.norm() == 0.0 {
        return Err(Error::ZeroArgument("theta evaluated at 0".into()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for n in -ctx.half_width..=ctx.half_width {
        acc += theta_coeff(ctx, n) * z.powi(n as i32);
    }
    Ok(acc)
}

/// Evaluate the translate `theta_c(z) = theta(z/c)`.
pub fn theta_c_eval(ctx: &ThetaContext, c: C64, z: C64) -> Result<C64> {
    if c.norm() == 0.0 {
        return Err(Error::ZeroArgument("theta translate with c = 0".into()));
    }
    theta_eval(ctx, z / c)
}

/// Scalar Laurent series of `theta_c^delta` on (at least) the context
/// window, certified numerically complete at its edges.
pub fn theta_c_power_series(
    ctx: &ThetaContext,
    c: C64,
    delta: u32,
    half_width: Option<i64>,
) -> Result<TruncatedLaurentSeries> {
    if c.norm() == 0.0 {
        return Err(Error::ZeroArgument("theta translate with c = 0".into()));
    }
    if delta == 0 {
        return Ok(TruncatedLaurentSeries::scalar_one());
    }
    let mut w = half_width.unwrap_or(ctx.half_width).max(1);
    loop {
        let mut base = TruncatedLaurentSeries::zeros(-w, w, 1, 1);
        for n in -w..=w {
            base.coeff_mut(n)[(0, 0)] = theta_coeff(ctx, n) * c.powi(-n as i32);
        }
        let base = base.promote_if_certified(EDGE_REL);
        if !(base.is_exact_below() && base.is_exact_above()) {
            w *= 2;
            if w > 1 << 20 {
                return Err(Error::WindowExhausted("theta_c window exceeds 2^20".into()));
            }
            continue;
        }
        let mut acc = base.clone();
        for _ in 1..delta {
            acc = acc.mul(&base)?;
        }
        return Ok(acc);
    }
}

/// Matrix-valued constant series helper: `theta_c^delta * M` as a series.
pub fn theta_weighted_constant(
    ctx: &ThetaContext,
    c: C64,
    delta: u32,
    m: &CMatrix,
) -> Result<TruncatedLaurentSeries> {
    let s = theta_c_power_series(ctx, c, delta, None)?;
    let mut out = TruncatedLaurentSeries::zeros(s.n_min(), s.n_max(), m.rows(), m.cols());
    for d in s.n_min()..=s.n_max() {
        out.set_coeff(d, m.scale(s.coeff(d).unwrap()[(0, 0)]));
    }
    Ok(out.promote_if_certified(EDGE_REL))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c64(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn ctx2() -> ThetaContext {
        ThetaContext::new(c64(2.0, 0.0)).unwrap()
    }

    #[test]
    fn coefficients_closed_form() {
        let ctx = ctx2();
        assert_eq!(theta_coeff(&ctx, 0), c64(1.0, 0.0));
        assert_eq!(theta_coeff(&ctx, -1), c64(1.0, 0.0));
        assert_eq!(theta_coeff(&ctx, 3), c64(0.015625, 0.0));
        // normalization symmetry, bitwise
        for n in -8..8i64 {
            assert_eq!(theta_coeff(&ctx, n), theta_coeff(&ctx, -n - 1));
        }
    }

    #[test]
    fn functional_equation_oracle() {
        // theta(qz)/theta(z) = z checked with both sides evaluated
        // independently.
        let ctx = ctx2();
        let z = c64(0.7, 0.2);
        let lhs = theta_eval(&ctx, ctx.q() * z).unwrap();
        let rhs = z * theta_eval(&ctx, z).unwrap();
        assert!((lhs - rhs).norm() < 1e-10 * rhs.norm());
    }

    #[test]
    fn zero_spiral() {
        let ctx = ctx2();
        let scale = theta_eval(&ctx, c64(1.0, 0.0)).unwrap().norm();
        assert!(theta_eval(&ctx, c64(-1.0, 0.0)).unwrap().norm() <= 1e-10 * scale);
        assert!(theta_eval(&ctx, c64(-2.0, 0.0)).unwrap().norm() <= 1e-10 * scale);
        assert!(theta_eval(&ctx, c64(-0.5, 0.0)).unwrap().norm() <= 1e-10 * scale);
    }

    #[test]
    fn translate_series_and_zeros() {
        let ctx = ctx2();
        // delta = 1, c = 1: coefficients are the theta coefficients
        let s = theta_c_power_series(&ctx, c64(1.0, 0.0), 1, None).unwrap();
        for n in -5..=5i64 {
            assert_eq!(s.coeff(n).unwrap()[(0, 0)], theta_coeff(&ctx, n));
        }
        // zero of theta_c at z = -c
        let c = c64(1.3, 0.4);
        let s = theta_c_power_series(&ctx, c, 1, None).unwrap();
        let at_zero = s.eval(-c).unwrap()[(0, 0)];
        assert!(at_zero.norm() <= 1e-10 * s.max_coeff_norm());
        // delta = 2 equals the pointwise square
        let s2 = theta_c_power_series(&ctx, c64(1.0, 0.0), 2, None).unwrap();
        let z0 = c64(0.5, 0.0);
        let direct = theta_eval(&ctx, z0).unwrap();
        let via_series = s2.eval(z0).unwrap()[(0, 0)];
        assert!((via_series - direct * direct).norm() <= 1e-10 * direct.norm_sqr());
    }

    #[test]
    fn complex_modulus_widening() {
        let q = c64(1.5, 0.3);
        let ctx = ThetaContext::with_half_width(q, 4).unwrap();
        assert!(ctx.half_width() >= 8, "window must widen for |q| ~ 1.53");
        let z = c64(1.1, -0.4);
        let lhs = theta_eval(&ctx, q * z).unwrap();
        let rhs = z * theta_eval(&ctx, z).unwrap();
        assert!((lhs - rhs).norm() < 1e-9 * rhs.norm());
    }

    #[test]
    fn rejects_small_q() {
        assert!(ThetaContext::new(c64(1.0, 0.0)).is_err());
        assert!(ThetaContext::new(c64(0.5, 0.0)).is_err());
    }
}
