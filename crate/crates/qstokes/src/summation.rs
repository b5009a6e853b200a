//! The formal gauge, its theta-weighted directional summations, Stokes
//! matrices, relative summations and q-Gevrey growth estimation.
//!
//! For a system `A` in standard form with graded part `A_0`, the unique
//! unipotent formal gauge `F` with `(sigma_q F) A_0 = A F` has blocks
//! solving
//!
//! ```text
//! sigma_q F_{i,j} z^{mu_j} A_j - z^{mu_i} A_i F_{i,j}
//!     = sum_{i<l<j} U_{i,l} F_{l,j} + U_{i,j} ,
//! ```
//!
//! computed here by the upward coefficient recursion in increasing level
//! order. Directional summation replaces each block by `G_{i,j} /
//! theta_c^{delta}` with `G` holomorphic on `C^*`; per Laurent coefficient
//! the `G` equation reduces to Sylvester solves with `lambda = c^delta q^n`,
//! which is exactly where the resonance locus shows up. Stokes matrices are
//! quotients of two summations evaluated at a basepoint.

use std::collections::BTreeMap;


use crate::error::{Error, Result};
use crate::matrix::{C64, CMatrix};
use crate::qsystem::{elliptic_class, resonance_set, EllipticPoint, QSystem, ResonanceSet};
use crate::series::{ScaledCoefficientTrack, TruncatedLaurentSeries};
use crate::structure::BlockStructure;
use crate::sylvester::sylvester_solve;
use crate::theta::{theta_c_eval, theta_c_power_series, ThetaContext};

/// Knobs for summation and resonance margins.
#[derive(Clone, Debug)]
pub struct SumParams {
    /// Minimal distance (log coordinates on `E_q`) from a direction to the
    /// resonance locus.
    pub resonance_margin: f64,
    /// Required relative decay of `G` coefficients at the window edges.
    pub tail_rel: f64,
    /// Half-width override for theta windows; `None` uses the context.
    pub half_width: Option<i64>,
    /// Number of window-doubling retries before giving up.
    pub max_widen: usize,
}

impl Default for SumParams {
    fn default() -> Self {
        SumParams {
            resonance_margin: 1e-4,
            tail_rel: 1e-14,
            half_width: None,
            max_widen: 3,
        }
    }
}

// ---------------------------------------------------------------------------
// Formal gauge
// ---------------------------------------------------------------------------

/// The unipotent formal gauge, blockwise, truncated at a formal degree cap.
#[derive(Clone, Debug)]
pub struct FormalGauge {
    pub structure: BlockStructure,
    pub q: C64,
    pub blocks: BTreeMap<(usize, usize), TruncatedLaurentSeries>,
    pub degree_cap: i64,
}

impl FormalGauge {
    /// Assemble the full matrix series `I + blocks` on the common window.
    pub fn to_series(&self) -> TruncatedLaurentSeries {
        let n = self.structure.size();
        let lo = self
            .blocks
            .values()
            .map(|b| b.n_min())
            .min()
            .unwrap_or(0)
            .min(0);
        let hi = self
            .blocks
            .values()
            .map(|b| b.n_max())
            .max()
            .unwrap_or(0)
            .max(0);
        let mut s = TruncatedLaurentSeries::zeros(lo, hi, n, n);
        let mut c0 = s.coeff_or_zero(0);
        c0.set_sub_matrix(0, 0, &CMatrix::identity(n));
        s.set_coeff(0, c0);
        for (&(i, j), b) in &self.blocks {
            let (r0, c0_) = (self.structure.offset(i), self.structure.offset(j));
            for d in b.n_min()..=b.n_max() {
                let mut coeff = s.coeff_or_zero(d);
                let blk = b.coeff(d).unwrap();
                for r in 0..blk.rows() {
                    for c in 0..blk.cols() {
                        coeff[(r0 + r, c0_ + c)] = blk[(r, c)];
                    }
                }
                s.set_coeff(d, coeff);
            }
        }
        // The assembled matrix is exact below (all blocks are), truncated
        // above at the formal cap.
        s
    }

    /// Residual of the defining identity `(sigma_q F) A_0 = A F` over the
    /// window where all terms are determined, relative to the data scale.
    pub fn residual(&self, a: &QSystem) -> Result<f64> {
        let f = self.to_series();
        let sa0 = a.graded().to_system().to_series();
        let sa = a.to_series();
        let lhs = f.sigma_q(a.q).mul(&sa0)?;
        let rhs = sa.mul(&f)?;
        // Restrict to degrees both sides certify; the formal cap truncates
        // above, so compare on the intersection only.
        let lo = lhs.n_min().max(rhs.n_min());
        let hi = lhs.n_max().min(rhs.n_max()).min(self.degree_cap);
        let lhs = lhs.restricted(lo, hi)?;
        let rhs = rhs.restricted(lo, hi)?;
        let scale = (f.max_coeff_norm() * (sa.max_coeff_norm() + sa0.max_coeff_norm())).max(1e-300);
        Ok(lhs.sub(&rhs)?.max_coeff_norm() / scale)
    }
}

/// Compute the formal gauge up to coefficient degree `n_cap`.
///
/// Blocks are produced in increasing level order; inside a block the
/// upward recursion `f_n = A_i^{-1} (q^{n-delta} f_{n-delta} A_j -
/// v_{n+mu_i})` starts from the vanishing tail.
pub fn formal_gauge(a: &QSystem, n_cap: i64) -> Result<FormalGauge> {
    let s = &a.structure;
    // Certify the cap against double range: the level-delta block grows
    // like |q|^{n^2 / (2 delta)}.
    if let Some(dmin) = s.min_level() {
        let growth = (n_cap as f64).powi(2) / (2.0 * dmin as f64) * a.q.norm().ln();
        if growth > 644.0 {
            // ln(1e280)
            return Err(Error::WindowExhausted(format!(
                "formal cap {n_cap} overflows double range for |q| = {}",
                a.q.norm()
            )));
        }
    }
    let mut blocks: BTreeMap<(usize, usize), TruncatedLaurentSeries> = BTreeMap::new();
    for (i, j) in s.pairs_by_level() {
        let (ri, rj) = (s.ranks[i], s.ranks[j]);
        let (mu_i, mu_j) = (s.slopes[i], s.slopes[j]);
        let delta = mu_j - mu_i;
        // Right-hand side: sum_{i<l<j} U_{i,l} F_{l,j} + U_{i,j}.
        let mut rhs: Option<TruncatedLaurentSeries> = a.offdiag.get(&(i, j)).cloned();
        for l in (i + 1)..j {
            let (u_il, f_lj) = match (a.offdiag.get(&(i, l)), blocks.get(&(l, j))) {
                (Some(u), Some(f)) => (u, f),
                _ => continue,
            };
            if f_lj.max_coeff_norm() == 0.0 {
                continue;
            }
            let term = u_il.mul(f_lj)?;
            rhs = Some(match rhs {
                Some(r) => r.add(&term)?,
                None => term,
            });
        }
        let rhs = match rhs {
            Some(r) if r.max_coeff_norm() > 0.0 => r,
            _ => {
                blocks.insert((i, j), TruncatedLaurentSeries::zeros(0, 0, ri, rj));
                continue;
            }
        };
        let a_i_inv = a.diag[i].inverse()?;
        // support: f_n = 0 below rhs.n_min - mu_i; past the right-hand
        // side's polynomial support the homogeneous recursion keeps running
        // up to the cap (this is where the divergence lives)
        let n_start = rhs.n_min() - mu_i;
        let n_hi = if rhs.is_exact_above() {
            n_cap
        } else {
            n_cap.min(rhs.n_max() - mu_i)
        };
        if n_hi < n_start {
            blocks.insert((i, j), TruncatedLaurentSeries::zeros(0, 0, ri, rj));
            continue;
        }
        let mut f = TruncatedLaurentSeries::zeros(n_start, n_hi, ri, rj);
        for n in n_start..=n_hi {
            let prev = if n - delta >= n_start {
                f.coeff_or_zero(n - delta)
            } else {
                CMatrix::zeros(ri, rj)
            };
            let v = rhs.coeff_or_zero(n + mu_i);
            let qpow = a.q.powi((n - delta) as i32);
            let term = &(&prev * &a.diag[j]).scale(qpow) - &v;
            f.set_coeff(n, &a_i_inv * &term);
        }
        // Coefficients below the start are genuinely zero (the recursion
        // starts from the vanishing tail). Above the cap the block is
        // truncated, except when the recursion has landed on an exactly
        // zero tail of a polynomial solution, which it then keeps forever.
        let tail_exact = rhs.is_exact_above()
            && n_hi == n_cap
            && (0..delta.max(1))
                .all(|t| n_hi - t >= n_start && f.coeff_or_zero(n_hi - t).max_norm() == 0.0)
            && n_hi >= rhs.n_max() - mu_i + delta;
        let f = if tail_exact { f.trimmed() } else { f.demote_above() };
        blocks.insert((i, j), f);
    }
    Ok(FormalGauge {
        structure: s.clone(),
        q: a.q,
        blocks,
        degree_cap: n_cap,
    })
}

// ---------------------------------------------------------------------------
// Directional summation
// ---------------------------------------------------------------------------

/// A directional summation of the formal gauge: block `(i, j)` represents
/// the meromorphic function `G_{i,j}(z) / theta_c(z)^{delta_{i,j}}`.
#[derive(Clone, Debug)]
pub struct DirectionalSum {
    pub direction: EllipticPoint,
    pub theta_ctx: ThetaContext,
    pub structure: BlockStructure,
    pub q: C64,
    /// `(G, delta)` per block; poles live only on `[-c; q]` with
    /// multiplicity at most `delta`, by construction.
    pub blocks: BTreeMap<(usize, usize), (TruncatedLaurentSeries, u32)>,
}

/// Check a direction against the resonance locus and return the canonical
/// representative on success.
pub fn check_direction(rs: &ResonanceSet, c: &EllipticPoint, margin: f64) -> Result<C64> {
    if let Some((dist, witness)) = rs.margin(c.rep()) {
        if dist < margin {
            return Err(Error::ResonantDirection {
                witness,
                distance: dist,
            });
        }
    }
    Ok(c.rep())
}

/// Sum the formal gauge of `a` in the direction `c`, using the canonical
/// representative of the class.
pub fn directional_sum(a: &QSystem, c: &EllipticPoint, params: &SumParams) -> Result<DirectionalSum> {
    directional_sum_with_rep(a, c.rep(), params)
}

/// Sum in the direction of the *given* representative. Contour integrals
/// rely on this: the representative must vary continuously along the
/// contour, so it is not reduced to the fundamental annulus.
pub fn directional_sum_with_rep(a: &QSystem, c_rep: C64, params: &SumParams) -> Result<DirectionalSum> {
    let rs = resonance_set(&a.graded())?;
    if let Some((dist, witness)) = rs.margin(c_rep) {
        if dist < params.resonance_margin {
            return Err(Error::ResonantDirection {
                witness,
                distance: dist,
            });
        }
    }
    let ctx = ThetaContext::with_half_width(
        a.q,
        params.half_width.unwrap_or(ThetaContext::DEFAULT_HALF_WIDTH),
    )?;
    let mut widen = 0usize;
    let mut half_width = ctx.half_width();
    loop {
        match directional_sum_attempt(a, c_rep, &ctx, half_width, params) {
            Ok(sum) => return Ok(sum),
            Err(Error::WindowExhausted(_)) if widen < params.max_widen => {
                widen += 1;
                half_width *= 2;
            }
            Err(e) => return Err(e),
        }
    }
}

fn directional_sum_attempt(
    a: &QSystem,
    c_rep: C64,
    ctx: &ThetaContext,
    half_width: i64,
    params: &SumParams,
) -> Result<DirectionalSum> {
    let s = &a.structure;
    let mut blocks: BTreeMap<(usize, usize), (TruncatedLaurentSeries, u32)> = BTreeMap::new();
    for (i, j) in s.pairs_by_level() {
        let (ri, rj) = (s.ranks[i], s.ranks[j]);
        let (mu_i, mu_j) = (s.slopes[i], s.slopes[j]);
        let delta = (mu_j - mu_i) as u32;
        // rhs = z^{-mu_i} ( sum_{i<l<j} U_{il} G_{lj} theta_c^{mu_l - mu_i}
        //                   + U_{ij} theta_c^{delta} )
        let mut rhs: Option<TruncatedLaurentSeries> = None;
        if let Some(u) = a.offdiag.get(&(i, j)) {
            if u.max_coeff_norm() > 0.0 {
                let th = theta_c_power_series(ctx, c_rep, delta, Some(half_width))?;
                rhs = Some(mul_scalar_series(u, &th)?);
            }
        }
        for l in (i + 1)..j {
            let u_il = match a.offdiag.get(&(i, l)) {
                Some(u) if u.max_coeff_norm() > 0.0 => u,
                _ => continue,
            };
            let (g_lj, _) = match blocks.get(&(l, j)) {
                Some(b) if b.0.max_coeff_norm() > 0.0 => b,
                _ => continue,
            };
            let d_il = (s.slopes[l] - mu_i) as u32;
            let th = theta_c_power_series(ctx, c_rep, d_il, Some(half_width))?;
            let term = mul_scalar_series(&u_il.mul(g_lj)?, &th)?;
            rhs = Some(match rhs {
                Some(r) => r.add(&term)?,
                None => term,
            });
        }
        let rhs = match rhs {
            Some(r) => r.shift(-mu_i),
            None => {
                blocks.insert((i, j), (TruncatedLaurentSeries::zeros(0, 0, ri, rj), delta));
                continue;
            }
        };
        let lambda_base = c_rep.powi(delta as i32);
        let mut g = TruncatedLaurentSeries::zeros(rhs.n_min(), rhs.n_max(), ri, rj);
        for n in rhs.n_min()..=rhs.n_max() {
            let v = rhs.coeff(n).unwrap();
            if v.max_norm() == 0.0 {
                continue;
            }
            let lambda = lambda_base * a.q.powi(n as i32);
            let x = sylvester_solve(lambda, &a.diag[j], &a.diag[i], v)?;
            g.set_coeff(n, x);
        }
        // certify edge decay, then promote to numerically complete
        let peak = g.max_coeff_norm().max(1e-300);
        let lo_edge = g.coeff_or_zero(g.n_min()).max_norm();
        let hi_edge = g.coeff_or_zero(g.n_max()).max_norm();
        if lo_edge > params.tail_rel * peak || hi_edge > params.tail_rel * peak {
            return Err(Error::WindowExhausted(format!(
                "G window edges not decayed: {:.3e} / {:.3e} of peak",
                lo_edge / peak,
                hi_edge / peak
            )));
        }
        let g = g.mark_truncated().promote_if_certified(params.tail_rel);
        blocks.insert((i, j), (g, delta));
    }
    Ok(DirectionalSum {
        direction: EllipticPoint::from_rep(c_rep, a.q)?,
        theta_ctx: ctx.clone(),
        structure: s.clone(),
        q: a.q,
        blocks,
    })
}

fn mul_scalar_series(
    block: &TruncatedLaurentSeries,
    scalar: &TruncatedLaurentSeries,
) -> Result<TruncatedLaurentSeries> {
    // block (r x c) times scalar series: use matrix mul with the scalar
    // embedded as 1x1 on the right after flattening columns; simplest is a
    // direct convolution.
    let mut lo = block.n_min() + scalar.n_min();
    let mut hi = block.n_max() + scalar.n_max();
    if !block.is_exact_above() {
        hi = hi.min(block.n_max() + scalar.n_min());
    }
    if !scalar.is_exact_above() {
        hi = hi.min(scalar.n_max() + block.n_min());
    }
    if !block.is_exact_below() {
        lo = lo.max(block.n_min() + scalar.n_max());
    }
    if !scalar.is_exact_below() {
        lo = lo.max(scalar.n_min() + block.n_max());
    }
    if lo > hi {
        return Err(Error::EmptyWindow);
    }
    let mut out = TruncatedLaurentSeries::zeros(lo, hi, block.rows(), block.cols());
    for m in lo..=hi {
        let mut acc = CMatrix::zeros(block.rows(), block.cols());
        let k_lo = block.n_min().max(m - scalar.n_max());
        let k_hi = block.n_max().min(m - scalar.n_min());
        for k in k_lo..=k_hi {
            let s = scalar.coeff(m - k).unwrap()[(0, 0)];
            acc = &acc + &block.coeff(k).unwrap().scale(s);
        }
        out.set_coeff(m, acc);
    }
    if !(block.is_exact_below() && scalar.is_exact_below()) {
        out = out.demote_below();
    }
    if !(block.is_exact_above() && scalar.is_exact_above()) {
        out = out.demote_above();
    }
    Ok(out)
}

impl DirectionalSum {
    /// Distance from the class of `-z` to the pole spiral class.
    pub fn pole_distance(&self, z: C64) -> Result<f64> {
        let cls = elliptic_class(-z, self.q)?;
        Ok(cls.distance(&self.direction))
    }

    /// Evaluate the summed gauge at `z`.
    pub fn eval(&self, z: C64) -> Result<CMatrix> {
        let d = self.pole_distance(z)?;
        if d < 1e-9 {
            return Err(Error::OnPoleSpiral(d));
        }
        let n = self.structure.size();
        let mut m = CMatrix::identity(n);
        let theta1 = theta_c_eval(&self.theta_ctx, self.direction.rep(), z)?;
        for (&(i, j), (g, delta)) in &self.blocks {
            if g.max_coeff_norm() == 0.0 {
                continue;
            }
            let gz = g.eval(z)?;
            let denom = theta1.powi(*delta as i32);
            let val = gz.scale(denom.inv());
            let (r0, c0) = (self.structure.offset(i), self.structure.offset(j));
            m.set_sub_matrix(r0, c0, &val);
        }
        Ok(m)
    }

    /// Max relative residual of the morphism identity
    /// `F(qz) A_0(z) = A(z) F(z)` over the sample points.
    pub fn morphism_residual(&self, a: &QSystem, points: &[C64]) -> Result<f64> {
        let a0 = a.graded().to_system();
        let mut worst: f64 = 0.0;
        for &z in points {
            let fz = self.eval(z)?;
            let fqz = self.eval(self.q * z)?;
            let az = a.eval_at(z)?;
            let a0z = a0.eval_at(z)?;
            let res = &(&fqz * &a0z) - &(&az * &fz);
            let sc = (fz.norm() * (az.norm() + a0z.norm())).max(1e-300);
            worst = worst.max(res.norm() / sc);
        }
        Ok(worst)
    }

    /// Strictly-upper block data as a theta-weighted block map.
    fn upper(&self) -> BTreeMap<(usize, usize), (TruncatedLaurentSeries, u32)> {
        self.blocks.clone()
    }
}

// ---------------------------------------------------------------------------
// Theta-weighted block algebra (for relative sums)
// ---------------------------------------------------------------------------

type TwBlocks = BTreeMap<(usize, usize), (TruncatedLaurentSeries, u32)>;

fn twb_zero() -> TwBlocks {
    BTreeMap::new()
}

fn twb_neg(x: &TwBlocks) -> TwBlocks {
    x.iter()
        .map(|(&k, (g, d))| (k, (g.scale(C64::new(-1.0, 0.0)), *d)))
        .collect()
}

fn twb_add(s: &BlockStructure, x: &TwBlocks, y: &TwBlocks) -> Result<TwBlocks> {
    let mut out = x.clone();
    for (&k, (g, d)) in y {
        match out.get_mut(&k) {
            Some((cur, dd)) => {
                debug_assert_eq!(*dd, *d);
                if cur.max_coeff_norm() == 0.0 {
                    *cur = g.clone();
                } else if g.max_coeff_norm() > 0.0 {
                    *cur = cur.add(g)?;
                }
            }
            None => {
                out.insert(k, (g.clone(), *d));
            }
        }
    }
    let _ = s;
    Ok(out)
}

/// Product of two unipotent theta-weighted matrices `(I + X)(I + Y)`,
/// returned as the strictly-upper part `X + Y + X Y`. Denominator exponents
/// add along compositions, matching the block level, so every block keeps
/// its canonical `theta^{delta}` weight.
fn twb_compose(s: &BlockStructure, x: &TwBlocks, y: &TwBlocks) -> Result<TwBlocks> {
    let mut out = twb_add(s, x, y)?;
    let mut prod = twb_zero();
    for (&(i, l), (gx, _)) in x {
        if gx.max_coeff_norm() == 0.0 {
            continue;
        }
        for (&(l2, j), (gy, _)) in y {
            if l2 != l || gy.max_coeff_norm() == 0.0 {
                continue;
            }
            let delta = (s.level(i, j)) as u32;
            let term = gx.mul(gy)?;
            let entry = prod
                .entry((i, j))
                .or_insert_with(|| (TruncatedLaurentSeries::zeros(term.n_min(), term.n_max(), term.rows(), term.cols()), delta));
            if entry.0.max_coeff_norm() == 0.0 {
                entry.0 = term;
            } else {
                entry.0 = entry.0.add(&term)?;
            }
        }
    }
    out = twb_add(s, &out, &prod)?;
    Ok(out)
}

/// Strictly-upper part of `(I + X)^{-1} = I - X + X^2 - ...` (finite).
fn twb_inverse(s: &BlockStructure, x: &TwBlocks) -> Result<TwBlocks> {
    let k = s.block_count();
    let neg = twb_neg(x);
    let mut acc = neg.clone();
    let mut term = neg.clone();
    for _ in 2..k {
        term = twb_mul_strict(s, &term, &neg)?;
        acc = twb_add(s, &acc, &term)?;
    }
    Ok(acc)
}

/// Strict product `X Y` (no identity parts).
fn twb_mul_strict(s: &BlockStructure, x: &TwBlocks, y: &TwBlocks) -> Result<TwBlocks> {
    let mut prod = twb_zero();
    for (&(i, l), (gx, _)) in x {
        if gx.max_coeff_norm() == 0.0 {
            continue;
        }
        for (&(l2, j), (gy, _)) in y {
            if l2 != l || gy.max_coeff_norm() == 0.0 {
                continue;
            }
            let delta = (s.level(i, j)) as u32;
            let term = gx.mul(gy)?;
            match prod.get_mut(&(i, j)) {
                Some((cur, _)) => {
                    *cur = cur.add(&term)?;
                }
                None => {
                    prod.insert((i, j), (term, delta));
                }
            }
        }
    }
    Ok(prod)
}

// ---------------------------------------------------------------------------
// Relative summation
// ---------------------------------------------------------------------------

/// Relative summation between two systems over the same graded part:
/// the series-level composition `S_c F(A') . (S_c F(A))^{-1}`.
pub fn relative_sum(
    a: &QSystem,
    a_prime: &QSystem,
    c: &EllipticPoint,
    params: &SumParams,
) -> Result<DirectionalSum> {
    if a.structure != a_prime.structure {
        return Err(Error::GradedMismatch("different block structures".into()));
    }
    for (x, y) in a.diag.iter().zip(a_prime.diag.iter()) {
        if (x - y).max_norm() > 1e-12 * x.max_norm().max(1.0) {
            return Err(Error::GradedMismatch("different graded parts".into()));
        }
    }
    let sa = directional_sum(a, c, params)?;
    let sap = directional_sum(a_prime, c, params)?;
    let inv = twb_inverse(&a.structure, &sa.upper())?;
    let blocks = twb_compose(&a.structure, &sap.upper(), &inv)?;
    Ok(DirectionalSum {
        direction: sa.direction,
        theta_ctx: sa.theta_ctx,
        structure: a.structure.clone(),
        q: a.q,
        blocks,
    })
}

// ---------------------------------------------------------------------------
// Stokes matrices
// ---------------------------------------------------------------------------

/// A Stokes matrix: the ambiguity between two directional summations,
/// evaluated at a basepoint. Always unipotent with respect to the block
/// structure.
#[derive(Clone, Debug)]
pub struct StokesMatrix {
    pub value: CMatrix,
    pub c: EllipticPoint,
    pub d: EllipticPoint,
    pub basepoint: C64,
}

/// Inverse of a unipotent block matrix by its terminating Neumann series:
/// `(I + X)^{-1} = I - X + X^2 - ...` with `X^k = 0`.
pub fn unipotent_inverse(m: &CMatrix, s: &BlockStructure) -> CMatrix {
    let n = s.size();
    let x = m - &CMatrix::identity(n);
    let mut acc = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    let mut sign = -1.0;
    for _ in 1..s.block_count() {
        term = &term * &x;
        acc = &acc + &term.scale(C64::new(sign, 0.0));
        sign = -sign;
    }
    acc
}

/// Check that the basepoint is compatible with the directions: its class
/// differs from both, and `-a` stays off both pole spirals.
pub fn check_basepoint(a_pt: C64, dirs: &[&EllipticPoint], q: C64, margin: f64) -> Result<()> {
    let cls = elliptic_class(a_pt, q)?;
    let neg = elliptic_class(-a_pt, q)?;
    for d in dirs {
        let dist = cls.distance(d);
        if dist < margin {
            return Err(Error::BasepointOnSpiral(dist));
        }
        let dist = neg.distance(d);
        if dist < margin {
            return Err(Error::BasepointOnSpiral(dist));
        }
    }
    Ok(())
}

/// Stokes matrix between directions `c` and `d` at the basepoint `a_pt`.
pub fn stokes_matrix(
    a: &QSystem,
    c: &EllipticPoint,
    d: &EllipticPoint,
    a_pt: C64,
    params: &SumParams,
) -> Result<StokesMatrix> {
    check_basepoint(a_pt, &[c, d], a.q, 1e-6)?;
    let sc = directional_sum(a, c, params)?;
    let sd = directional_sum(a, d, params)?;
    stokes_from_sums(&sc, &sd, a_pt)
}

/// Stokes matrix from two already-computed sums.
pub fn stokes_from_sums(sc: &DirectionalSum, sd: &DirectionalSum, a_pt: C64) -> Result<StokesMatrix> {
    let mc = sc.eval(a_pt)?;
    let md = sd.eval(a_pt)?;
    let value = &unipotent_inverse(&mc, &sc.structure) * &md;
    Ok(StokesMatrix {
        value,
        c: sc.direction,
        d: sd.direction,
        basepoint: a_pt,
    })
}

// ---------------------------------------------------------------------------
// q-Gevrey growth estimation
// ---------------------------------------------------------------------------

/// Verdict of the growth classifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GevreyVerdict {
    /// Estimated finite level `delta`.
    Finite(f64),
    /// No quadratic growth: the series is (at worst) geometric, hence
    /// analytic.
    Analytic,
}

/// Quadratic coefficient (in units of `n^2 ln|q| / 2`) below which the
/// verdict is "analytic".
const GEVREY_QUADRATIC_FLOOR: f64 = 0.1;

/// Fit `ln|f_n| ~ a0 + a1 n + a2 (n^2 ln|q| / 2)` on the tail half of the
/// track and report `delta = 1 / a2`.
pub fn gevrey_level_estimate(track: &ScaledCoefficientTrack, q: C64) -> Result<GevreyVerdict> {
    let pts = track.finite_points();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} finite coefficients, need at least 10",
            pts.len()
        )));
    }
    let tail = &pts[pts.len() / 2..];
    let lnq = q.norm().ln();
    // normal equations for [1, n, n^2 lnq / 2]
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for &(n, lm) in tail {
        let x = [1.0, n as f64, (n as f64) * (n as f64) * lnq / 2.0];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += x[a] * x[b];
            }
            r[a] += x[a] * lm;
        }
    }
    let sol = solve3(m, r).ok_or_else(|| Error::InsufficientData("degenerate fit".into()))?;
    let a2 = sol[2];
    if a2 < GEVREY_QUADRATIC_FLOOR {
        Ok(GevreyVerdict::Analytic)
    } else {
        Ok(GevreyVerdict::Finite(1.0 / a2))
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for k in 0..3 {
        let mut p = k;
        for i in k + 1..3 {
            if m[i][k].abs() > m[p][k].abs() {
                p = i;
            }
        }
        if m[p][k].abs() < 1e-12 {
            return None;
        }
        m.swap(k, p);
        r.swap(k, p);
        for i in k + 1..3 {
            let f = m[i][k] / m[k][k];
            for j in k..3 {
                m[i][j] -= f * m[k][j];
            }
            r[i] -= f * r[k];
        }
    }
    let mut x = [0.0; 3];
    for k in (0..3).rev() {
        let mut acc = r[k];
        for j in k + 1..3 {
            acc -= m[k][j] * x[j];
        }
        x[k] = acc / m[k][k];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
