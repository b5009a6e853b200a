//! q-difference systems in block upper-triangular standard form, and the
//! tannakian operations on them.
//!
//! A system is the data of `q`, slopes `mu_1 < ... < mu_k` with ranks
//! `r_i`, constant invertible diagonal blocks `A_i` (the full diagonal
//! block being `z^{mu_i} A_i`) and Laurent-polynomial over-diagonal blocks
//! `U_{i,j}`. It is in *polynomial* standard form when every `U_{i,j}` has
//! degrees in `[mu_i, mu_j)`, and *normalized* when all eigenvalues of all
//! `A_i` lie in the fundamental annulus `1 <= |lambda| < |q|`.
//!
//! Morphisms `F: A -> B` satisfy `(sigma_q F) A = B F`; tensor products are
//! Kronecker products re-sorted into standard form; duals are contragredient
//! matrices with negated, re-ordered slopes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use crate::eig::{cluster_eigenvalues, eigenvalues, eigenvector_basis, kernel_basis, spectral_decomposition};
use crate::error::{Error, ResonanceWitness, Result};
use crate::matrix::{one, zero, C64, CMatrix};
use crate::series::TruncatedLaurentSeries;
use crate::structure::BlockStructure;

// ---------------------------------------------------------------------------
// Elliptic points
// ---------------------------------------------------------------------------

/// A point of the elliptic curve `E_q = C^* / q^Z`, stored through its
/// canonical representative in the fundamental annulus `1 <= |z| < |q|`.
#[derive(Clone, Copy, Debug)]
pub struct EllipticPoint {
    rep: C64,
    q: C64,
}

impl EllipticPoint {
    /// Canonical representative of the class of `z`.
    pub fn new(z: C64, q: C64) -> Result<Self> {
        if z.norm() == 0.0 {
            return Err(Error::ZeroArgument("elliptic class of 0".into()));
        }
        let t = z.norm().ln() / q.norm().ln();
        // Deterministic boundary rule: land exactly on an integer when within
        // 1e-12, so points with |z| on the annulus boundary map to modulus 1.
        let m = if (t - t.round()).abs() < 1e-12 {
            t.round() as i64
        } else {
            t.floor() as i64
        };
        let rep = z * q.powi(-m as i32);
        Ok(EllipticPoint { rep, q })
    }

    /// Wrap a representative as-is, without reduction to the fundamental
    /// annulus. Contour integrations need representatives that vary
    /// continuously across the annulus boundary.
    pub fn from_rep(rep: C64, q: C64) -> Result<Self> {
        if rep.norm() == 0.0 {
            return Err(Error::ZeroArgument("elliptic class of 0".into()));
        }
        Ok(EllipticPoint { rep, q })
    }

    pub fn rep(&self) -> C64 {
        self.rep
    }

    pub fn q(&self) -> C64 {
        self.q
    }

    /// Distance to another class in log coordinates on `E_q`.
    pub fn distance(&self, other: &EllipticPoint) -> f64 {
        lattice_distance((self.rep / other.rep).ln(), self.q)
    }

    pub fn same_class(&self, other: &EllipticPoint, tol: f64) -> bool {
        self.distance(other) <= tol
    }
}

/// Distance from the complex number `w` to the lattice `Z log q + Z 2 pi i`.
/// This is the metric of `E_q` in logarithmic coordinates.
pub fn lattice_distance(w: C64, q: C64) -> f64 {
    let b1 = q.ln();
    let b2 = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    // Least-squares estimate of the integer coordinates, then a local search.
    let g11 = b1.norm_sqr();
    let g12 = b1.re * b2.re + b1.im * b2.im;
    let g22 = b2.norm_sqr();
    let r1 = w.re * b1.re + w.im * b1.im;
    let r2 = w.re * b2.re + w.im * b2.im;
    let det = g11 * g22 - g12 * g12;
    let (s0, t0) = if det.abs() > 1e-30 {
        ((r1 * g22 - r2 * g12) / det, (r2 * g11 - r1 * g12) / det)
    } else {
        (0.0, 0.0)
    };
    let mut best = f64::INFINITY;
    for ds in -2..=2i64 {
        for dt in -2..=2i64 {
            let s = (s0.round() as i64 + ds) as f64;
            let t = (t0.round() as i64 + dt) as f64;
            let p = w - b1.scale(s) - b2.scale(t);
            best = best.min(p.norm());
        }
    }
    best
}

/// Canonical projection `C^* -> E_q`.
pub fn elliptic_class(z: C64, q: C64) -> Result<EllipticPoint> {
    EllipticPoint::new(z, q)
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct QSystem {
    pub q: C64,
    pub structure: BlockStructure,
    /// Constant invertible parts `A_i` of the diagonal blocks.
    pub diag: Vec<CMatrix>,
    /// Laurent-polynomial blocks `U_{i,j}`, keyed by `(i, j)` with `i < j`.
    pub offdiag: BTreeMap<(usize, usize), TruncatedLaurentSeries>,
}

/// A pure (block-diagonal) system: the graded part of a `QSystem`.
#[derive(Clone, Debug)]
pub struct GradedSystem {
    pub q: C64,
    pub structure: BlockStructure,
    pub diag: Vec<CMatrix>,
}

impl GradedSystem {
    pub fn to_system(&self) -> QSystem {
        QSystem {
            q: self.q,
            structure: self.structure.clone(),
            diag: self.diag.clone(),
            offdiag: BTreeMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.structure.size()
    }
}

/// Validation report for a system; purely diagnostic.
#[derive(Clone, Debug)]
pub struct SystemDiagnostics {
    pub shape_ok: bool,
    pub diag_invertible: bool,
    pub pure: bool,
    pub polynomial_form: bool,
    pub normalized: bool,
    pub messages: Vec<String>,
}

impl QSystem {
    pub fn new(
        q: C64,
        structure: BlockStructure,
        diag: Vec<CMatrix>,
        offdiag: BTreeMap<(usize, usize), TruncatedLaurentSeries>,
    ) -> Result<Self> {
        if q.norm() <= 1.0 + 1e-6 {
            return Err(Error::InvalidSystem("|q| must exceed 1 + 1e-6".into()));
        }
        if diag.len() != structure.block_count() {
            return Err(Error::InvalidSystem("one constant block per slope required".into()));
        }
        for (i, d) in diag.iter().enumerate() {
            if d.rows() != structure.ranks[i] || d.cols() != structure.ranks[i] {
                return Err(Error::InvalidSystem(format!(
                    "diagonal block {} has shape {}x{}, expected rank {}",
                    i + 1,
                    d.rows(),
                    d.cols(),
                    structure.ranks[i]
                )));
            }
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("diagonal block {}", i + 1)));
            }
        }
        for (&(i, j), u) in &offdiag {
            if i >= j || j >= structure.block_count() {
                return Err(Error::InvalidSystem(format!(
                    "off-diagonal key ({},{}) is not strictly upper",
                    i + 1,
                    j + 1
                )));
            }
            if u.shape() != (structure.ranks[i], structure.ranks[j]) {
                return Err(Error::InvalidSystem(format!(
                    "block U[{},{}] has shape {:?}, expected {}x{}",
                    i + 1,
                    j + 1,
                    u.shape(),
                    structure.ranks[i],
                    structure.ranks[j]
                )));
            }
            if !u.is_finite() {
                return Err(Error::NonFinite(format!("block U[{},{}]", i + 1, j + 1)));
            }
        }
        Ok(QSystem {
            q,
            structure,
            diag,
            offdiag,
        })
    }

    /// The unit object: the rank-one system `(1)` of slope zero.
    pub fn unit(q: C64) -> Self {
        QSystem {
            q,
            structure: BlockStructure::new(vec![0], vec![1]).unwrap(),
            diag: vec![CMatrix::scalar(one())],
            offdiag: BTreeMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.structure.size()
    }

    pub fn is_pure(&self) -> bool {
        self.offdiag.values().all(|u| u.max_coeff_norm() == 0.0)
    }

    /// Graded part: drop the over-diagonal.
    pub fn graded(&self) -> GradedSystem {
        GradedSystem {
            q: self.q,
            structure: self.structure.clone(),
            diag: self.diag.clone(),
        }
    }

    /// Full matrix as one exact Laurent-polynomial series.
    pub fn to_series(&self) -> TruncatedLaurentSeries {
        let n = self.size();
        let mut lo = *self.structure.slopes.iter().min().unwrap();
        let mut hi = *self.structure.slopes.iter().max().unwrap();
        for u in self.offdiag.values() {
            lo = lo.min(u.n_min());
            hi = hi.max(u.n_max());
        }
        let mut s = TruncatedLaurentSeries::zeros(lo, hi, n, n);
        for (i, a) in self.diag.iter().enumerate() {
            let off = self.structure.offset(i);
            let d = self.structure.slopes[i];
            let mut coeff = s.coeff_or_zero(d);
            coeff.set_sub_matrix(off, off, a);
            s.set_coeff(d, coeff);
        }
        for (&(i, j), u) in &self.offdiag {
            let (ri, cj) = (self.structure.offset(i), self.structure.offset(j));
            for d in u.n_min()..=u.n_max() {
                let mut coeff = s.coeff_or_zero(d);
                let block = u.coeff(d).unwrap();
                for r in 0..block.rows() {
                    for c in 0..block.cols() {
                        coeff[(ri + r, cj + c)] = block[(r, c)];
                    }
                }
                s.set_coeff(d, coeff);
            }
        }
        s
    }

    /// Evaluate the full matrix at a point.
    pub fn eval_at(&self, z: C64) -> Result<CMatrix> {
        self.to_series().eval(z)
    }

    pub fn polynomial_form(&self) -> bool {
        self.offdiag.iter().all(|(&(i, j), u)| {
            let lo = self.structure.slopes[i];
            let hi = self.structure.slopes[j];
            u.degrees().all(|d| {
                let c = u.coeff(d).unwrap();
                c.max_norm() == 0.0 || (d >= lo && d < hi)
            })
        })
    }

    pub fn normalized(&self) -> bool {
        let qn = self.q.norm();
        self.diag.iter().all(|a| {
            eigenvalues(a)
                .iter()
                .all(|l| l.norm() >= 1.0 - 1e-12 && l.norm() < qn * (1.0 - 1e-12))
        })
    }

    /// Diagnostic validation; never fails.
    pub fn validate(&self) -> SystemDiagnostics {
        let mut messages = Vec::new();
        let mut diag_invertible = true;
        for (i, a) in self.diag.iter().enumerate() {
            let smin = a.smallest_singular_value();
            if smin <= 1e-12 * a.max_norm().max(1.0) {
                diag_invertible = false;
                messages.push(format!("diagonal block {} is singular to tolerance", i + 1));
            }
        }
        let pure = self.is_pure();
        let polynomial_form = self.polynomial_form();
        let normalized = self.normalized();
        if !polynomial_form {
            messages.push("over-diagonal degrees leave the polynomial window [mu_i, mu_j)".into());
        }
        if !normalized {
            messages.push("eigenvalues leave the fundamental annulus".into());
        }
        SystemDiagnostics {
            shape_ok: true,
            diag_invertible,
            pure,
            polynomial_form,
            normalized,
            messages,
        }
    }
}

// ---------------------------------------------------------------------------
// Normalization by shearing
// ---------------------------------------------------------------------------

/// Record of the block-diagonal shearing gauge used by [`normalize`]: the
/// gauge series per block, plus the eigenvalue shifts `alpha -> alpha q^{-m}`.
#[derive(Clone, Debug)]
pub struct GaugeRecord {
    pub blocks: Vec<TruncatedLaurentSeries>,
    pub shifts: Vec<Vec<(C64, i64)>>,
}

impl GaugeRecord {
    /// Assemble the full gauge as one block-diagonal series.
    pub fn to_series(&self, s: &BlockStructure) -> TruncatedLaurentSeries {
        let n = s.size();
        let lo = self.blocks.iter().map(|b| b.n_min()).min().unwrap_or(0);
        let hi = self.blocks.iter().map(|b| b.n_max()).max().unwrap_or(0);
        let mut out = TruncatedLaurentSeries::zeros(lo, hi, n, n);
        for (i, b) in self.blocks.iter().enumerate() {
            let off = s.offset(i);
            for d in b.n_min()..=b.n_max() {
                let mut coeff = out.coeff_or_zero(d);
                coeff.set_sub_matrix(off, off, b.coeff(d).unwrap());
                out.set_coeff(d, coeff);
            }
        }
        out
    }
}

/// Normalize a system by per-eigenvalue-cluster shearing, so that every
/// eigenvalue of every constant block lands in the fundamental annulus.
pub fn normalize(a: &QSystem) -> Result<(QSystem, GaugeRecord)> {
    let k = a.structure.block_count();
    let qn = a.q.norm();
    let mut gauge_blocks = Vec::with_capacity(k);
    let mut gauge_inv_blocks = Vec::with_capacity(k);
    let mut new_diag = Vec::with_capacity(k);
    let mut shifts = Vec::with_capacity(k);
    for i in 0..k {
        let ai = &a.diag[i];
        let r = ai.rows();
        let spec = spectral_decomposition(ai, 1e-8)?;
        // Guard against clusters straddling a q-power boundary: two distinct
        // clusters must not normalize onto the same point of the annulus
        // while being numerically inseparable.
        let mut block_shifts = Vec::new();
        let mut acc = CMatrix::zeros(r, r);
        let mut parts: Vec<(i64, CMatrix)> = Vec::new();
        for (lam, _, p) in &spec.clusters {
            if lam.norm() < 1e-13 {
                return Err(Error::InvalidSystem(format!(
                    "block {} has a numerically zero eigenvalue",
                    i + 1
                )));
            }
            let t = lam.norm().ln() / qn.ln();
            let dist_to_boundary = (t - t.round()).abs();
            let m = if dist_to_boundary < 1e-12 {
                t.round() as i64
            } else {
                if dist_to_boundary < 1e-9 {
                    return Err(Error::IllConditionedEigenproblem(format!(
                        "eigenvalue {lam} sits within 1e-9 of a q-power boundary"
                    )));
                }
                t.floor() as i64
            };
            block_shifts.push((*lam, m));
            parts.push((m, p.clone()));
            acc = &acc + &p.scale(a.q.powi(-m as i32)); // q^{-m} on the cluster
        }
        // new A_i = sum_c q^{-m_c} A_i P_c
        new_diag.push(&acc * ai);
        // gauge F_i = sum_c z^{-m_c} P_c ; inverse swaps the sign of m_c
        let lo = parts.iter().map(|(m, _)| -m).min().unwrap();
        let hi = parts.iter().map(|(m, _)| -m).max().unwrap();
        let mut gauge = TruncatedLaurentSeries::zeros(lo, hi, r, r);
        let mut gauge_inv = TruncatedLaurentSeries::zeros(-hi, -lo, r, r);
        for (m, p) in &parts {
            let cur = gauge.coeff_or_zero(-m);
            gauge.set_coeff(-m, &cur + p);
            let cur = gauge_inv.coeff_or_zero(*m);
            gauge_inv.set_coeff(*m, &cur + p);
        }
        gauge_blocks.push(gauge);
        gauge_inv_blocks.push(gauge_inv);
        shifts.push(block_shifts);
    }
    // Off-diagonal transform: U' = (sigma_q F_i) U F_j^{-1}.
    let mut new_off = BTreeMap::new();
    for (&(i, j), u) in &a.offdiag {
        let left = gauge_blocks[i].sigma_q(a.q);
        let prod = left.mul(u)?.mul(&gauge_inv_blocks[j])?;
        new_off.insert((i, j), prod.trimmed());
    }
    let out = QSystem::new(a.q, a.structure.clone(), new_diag, new_off)?;
    Ok((
        out,
        GaugeRecord {
            blocks: gauge_blocks,
            shifts,
        },
    ))
}

// ---------------------------------------------------------------------------
// Tensor, dual, internal Hom
// ---------------------------------------------------------------------------

/// Bookkeeping of a tensor product: the permutation taking the raw
/// Kronecker basis to the slope-sorted standard basis.
#[derive(Clone, Debug)]
pub struct TensorLayout {
    /// `new_to_old[r]` is the raw Kronecker index placed at new position `r`.
    pub new_to_old: Vec<usize>,
}

impl TensorLayout {
    /// Conjugate a raw-Kronecker-basis matrix into the sorted basis.
    pub fn permute_matrix(&self, m: &CMatrix) -> CMatrix {
        let n = self.new_to_old.len();
        let mut out = CMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] = m[(self.new_to_old[r], self.new_to_old[c])];
            }
        }
        out
    }
}

fn kron_series(a: &TruncatedLaurentSeries, b: &TruncatedLaurentSeries) -> TruncatedLaurentSeries {
    let lo = a.n_min() + b.n_min();
    let hi = a.n_max() + b.n_max();
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut s = TruncatedLaurentSeries::zeros(lo, hi, ra * rb, ca * cb);
    for da in a.n_min()..=a.n_max() {
        for db in b.n_min()..=b.n_max() {
            let term = a.coeff(da).unwrap().kron(b.coeff(db).unwrap());
            let cur = s.coeff_or_zero(da + db);
            s.set_coeff(da + db, &cur + &term);
        }
    }
    s
}

/// Kronecker product regrouped into standard form. Returns the product and
/// the recorded permutation.
pub fn tensor(a: &QSystem, b: &QSystem) -> Result<(QSystem, TensorLayout)> {
    if (a.q - b.q).norm() > 1e-12 {
        return Err(Error::InvalidSystem("tensor factors must share q".into()));
    }
    let na = a.size();
    let nb = b.size();
    let n = na * nb;
    // Raw index (ia, ib) -> slope sum; stable sort by slope keeps
    // lexicographic order inside a slope group.
    let mut order: Vec<usize> = (0..n).collect();
    let slope_of = |flat: usize| {
        let ia = flat / nb;
        let ib = flat % nb;
        a.structure.slopes[a.structure.block_of(ia)] + b.structure.slopes[b.structure.block_of(ib)]
    };
    order.sort_by_key(|&flat| slope_of(flat));
    let layout = TensorLayout {
        new_to_old: order.clone(),
    };
    // Grouped structure.
    let mut slopes = Vec::new();
    let mut ranks = Vec::new();
    for &flat in &order {
        let s = slope_of(flat);
        if slopes.last() == Some(&s) {
            *ranks.last_mut().unwrap() += 1;
        } else {
            slopes.push(s);
            ranks.push(1usize);
        }
    }
    let structure = BlockStructure::new(slopes.clone(), ranks)?;
    // Full Kronecker series, permuted, then sliced.
    let sk = kron_series(&a.to_series(), &b.to_series());
    let mut permuted = TruncatedLaurentSeries::zeros(sk.n_min(), sk.n_max(), n, n);
    for d in sk.n_min()..=sk.n_max() {
        permuted.set_coeff(d, layout.permute_matrix(sk.coeff(d).unwrap()));
    }
    from_full_series(a.q, &structure, &permuted).map(|sys| (sys, layout))
}

/// Slice a full standard-form Laurent series into a `QSystem`, checking the
/// block-triangular shape and that each diagonal block is the monomial
/// `z^{mu_i} A_i`.
pub fn from_full_series(
    q: C64,
    structure: &BlockStructure,
    s: &TruncatedLaurentSeries,
) -> Result<QSystem> {
    let k = structure.block_count();
    let scale = s.max_coeff_norm().max(1.0);
    let mut diag = Vec::with_capacity(k);
    let mut offdiag = BTreeMap::new();
    for i in 0..k {
        let off = structure.offset(i);
        let r = structure.ranks[i];
        let mu = structure.slopes[i];
        let mut block = CMatrix::zeros(r, r);
        for d in s.n_min()..=s.n_max() {
            let sub = s.coeff(d).unwrap().sub_matrix(off, off, r, r);
            if d == mu {
                block = sub;
            } else if sub.max_norm() > 1e-12 * scale {
                return Err(Error::InvalidSystem(format!(
                    "diagonal block {} is not the monomial z^{}: stray degree {}",
                    i + 1,
                    mu,
                    d
                )));
            }
        }
        diag.push(block);
    }
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let (ri, ci) = (structure.offset(i), structure.offset(j));
            let (nr, nc) = (structure.ranks[i], structure.ranks[j]);
            let mut lo = i64::MAX;
            let mut hi = i64::MIN;
            for d in s.n_min()..=s.n_max() {
                let sub = s.coeff(d).unwrap().sub_matrix(ri, ci, nr, nc);
                if sub.max_norm() > 1e-13 * scale {
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
            if lo > hi {
                continue;
            }
            if j < i {
                return Err(Error::InvalidSystem(format!(
                    "block ({},{}) below the diagonal is non-zero",
                    i + 1,
                    j + 1
                )));
            }
            let mut u = TruncatedLaurentSeries::zeros(lo, hi, nr, nc);
            for d in lo..=hi {
                u.set_coeff(d, s.coeff(d).unwrap().sub_matrix(ri, ci, nr, nc));
            }
            offdiag.insert((i, j), u);
        }
    }
    QSystem::new(q, structure.clone(), diag, offdiag)
}

/// Contragredient (dual) system `A^v = transpose(A^{-1})`, re-sorted to
/// increasing (negated) slopes.
pub fn dual(a: &QSystem) -> Result<QSystem> {
    let n = a.size();
    let k = a.structure.block_count();
    // A = D (I + N) with N = D^{-1} U strictly upper: finite Neumann series.
    let s = a.to_series();
    // D^{-1}: block diagonal with z^{-mu_i} A_i^{-1}.
    let lo = -a.structure.slopes.iter().max().unwrap();
    let hi = -a.structure.slopes.iter().min().unwrap();
    let mut dinv = TruncatedLaurentSeries::zeros(lo, hi, n, n);
    for i in 0..k {
        let off = a.structure.offset(i);
        let inv = a.diag[i].inverse()?;
        let d = -a.structure.slopes[i];
        let mut coeff = dinv.coeff_or_zero(d);
        coeff.set_sub_matrix(off, off, &inv);
        dinv.set_coeff(d, coeff);
    }
    // N = D^{-1} A - I
    let mut nmat = dinv.mul(&s)?;
    let cur = nmat.coeff_or_zero(0);
    nmat.set_coeff(0, &cur - &CMatrix::identity(n));
    // (I + N)^{-1} = sum (-N)^p, p < k
    let mut inv = TruncatedLaurentSeries::monomial(0, CMatrix::identity(n));
    let mut term = TruncatedLaurentSeries::monomial(0, CMatrix::identity(n));
    for _ in 1..k {
        term = term.mul(&nmat)?.scale(C64::new(-1.0, 0.0));
        inv = inv.add(&term)?;
    }
    let a_inv = inv.mul(&dinv)?.trimmed();
    // Transpose coefficients and reverse the block order.
    let rev_slopes: Vec<i64> = a.structure.slopes.iter().rev().map(|m| -m).collect();
    let rev_ranks: Vec<usize> = a.structure.ranks.iter().rev().cloned().collect();
    let structure = BlockStructure::new(rev_slopes, rev_ranks)?;
    // Position map: old flat index -> new flat index under block reversal.
    let mut old_to_new = vec![0usize; n];
    for old_block in 0..k {
        let new_block = k - 1 - old_block;
        let old_off = a.structure.offset(old_block);
        let new_off = structure.offset(new_block);
        for t in 0..a.structure.ranks[old_block] {
            old_to_new[old_off + t] = new_off + t;
        }
    }
    let mut res = TruncatedLaurentSeries::zeros(a_inv.n_min(), a_inv.n_max(), n, n);
    for d in a_inv.n_min()..=a_inv.n_max() {
        let coeff = a_inv.coeff(d).unwrap();
        let mut out = CMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                // transpose then permute
                out[(old_to_new[c], old_to_new[r])] = coeff[(r, c)];
            }
        }
        res.set_coeff(d, out);
    }
    from_full_series(a.q, &structure, &res)
}

/// Internal Hom object `Hom(A, B) = A^v (x) B`.
pub fn internal_hom(a: &QSystem, b: &QSystem) -> Result<(QSystem, TensorLayout)> {
    tensor(&dual(a)?, b)
}

// ---------------------------------------------------------------------------
// Morphism checking
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MorphismReport {
    /// Max relative residual of `(sigma_q F) A - B F` over the shared
    /// coefficient window.
    pub coeff_residual: f64,
    /// Max relative residual over the sample points.
    pub pointwise_residual: f64,
    /// Norm of blocks violating the slope triangularity `nu_j <= mu_i`
    /// (report only).
    pub triangularity_violation: f64,
}

impl MorphismReport {
    pub fn max_residual(&self) -> f64 {
        self.coeff_residual.max(self.pointwise_residual)
    }
}

/// Residual report for `F` as a candidate morphism `A -> B`, checked both
/// coefficient-wise and pointwise.
pub fn is_morphism(
    f: &TruncatedLaurentSeries,
    a: &QSystem,
    b: &QSystem,
    sample_points: &[C64],
) -> Result<MorphismReport> {
    if f.cols() != a.size() || f.rows() != b.size() {
        return Err(Error::DimensionMismatch(format!(
            "morphism shape {:?} against {} -> {}",
            f.shape(),
            a.size(),
            b.size()
        )));
    }
    let sa = a.to_series();
    let sb = b.to_series();
    let lhs = f.sigma_q(a.q).mul(&sa)?;
    let rhs = sb.mul(f)?;
    let diff = lhs.sub(&rhs)?;
    let scale = (f.max_coeff_norm() * (sa.max_coeff_norm() + sb.max_coeff_norm())).max(1e-300);
    let coeff_residual = diff.max_coeff_norm() / scale;
    let mut pointwise_residual: f64 = 0.0;
    for &z in sample_points {
        let fz = f.eval(z)?;
        let fqz = f.eval(a.q * z)?;
        let az = a.eval_at(z)?;
        let bz = b.eval_at(z)?;
        let res = &(&fqz * &az) - &(&bz * &fz);
        let sc = (fz.norm() * (az.norm() + bz.norm())).max(1e-300);
        pointwise_residual = pointwise_residual.max(res.norm() / sc);
    }
    // Triangularity shape report (nu_j <= mu_i allowed).
    let mut violation: f64 = 0.0;
    for jb in 0..b.structure.block_count() {
        for ia in 0..a.structure.block_count() {
            if b.structure.slopes[jb] <= a.structure.slopes[ia] {
                continue;
            }
            let r0 = b.structure.offset(jb);
            let c0 = a.structure.offset(ia);
            for d in f.n_min()..=f.n_max() {
                let sub = f.coeff(d).unwrap().sub_matrix(
                    r0,
                    c0,
                    b.structure.ranks[jb],
                    a.structure.ranks[ia],
                );
                violation = violation.max(sub.max_norm());
            }
        }
    }
    Ok(MorphismReport {
        coeff_residual,
        pointwise_residual,
        triangularity_violation: violation,
    })
}

/// Random sample points in the annulus `1 <= |z| < |q|`, avoiding the
/// negative real spiral by a small margin so theta denominators stay away
/// from their zeros.
pub fn sample_points<R: Rng>(rng: &mut R, q: C64, count: usize) -> Vec<C64> {
    let qn = q.norm();
    (0..count)
        .map(|_| {
            let r = qn.powf(rng.gen_range(0.05..0.95));
            let phi = rng.gen_range(-0.9 * std::f64::consts::PI..0.9 * std::f64::consts::PI);
            Complex64::from_polar(r, phi)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Resonance
// ---------------------------------------------------------------------------

/// One resonant direction class with its witnesses.
#[derive(Clone, Debug)]
pub struct ResonanceEntry {
    pub delta: i64,
    pub class: EllipticPoint,
    pub witnesses: Vec<ResonanceWitness>,
}

/// The catalogue of resonant direction classes of a graded system.
///
/// For every slope pair of level `delta` and eigenvalue pair `(alpha,
/// beta)`, the `delta` exact roots of `c^delta = alpha/beta` are listed
/// (reduced to the fundamental annulus). Membership tests against the full
/// resonance locus, including the `q`-power translates of these roots, go
/// through [`ResonanceSet::margin`], which measures the lattice distance of
/// `c^delta beta / alpha` for every witness.
#[derive(Clone, Debug)]
pub struct ResonanceSet {
    pub q: C64,
    pub entries: Vec<ResonanceEntry>,
    pub all_witnesses: Vec<ResonanceWitness>,
}

impl ResonanceSet {
    /// Distance (log coordinates on `E_q`, per-level scaled) from the
    /// direction class of `c` to the nearest point of the resonance locus,
    /// together with the witness achieving it. `None` for pure systems.
    pub fn margin(&self, c: C64) -> Option<(f64, ResonanceWitness)> {
        let mut best: Option<(f64, ResonanceWitness)> = None;
        for w in &self.all_witnesses {
            let wlog = c.ln().scale(w.delta as f64) + (w.beta / w.alpha).ln();
            let d = lattice_distance(wlog, self.q) / w.delta as f64;
            if best.as_ref().map_or(true, |(b, _)| d < *b) {
                best = Some((d, w.clone()));
            }
        }
        best
    }

    pub fn classes_at_level(&self, delta: i64) -> Vec<&ResonanceEntry> {
        self.entries.iter().filter(|e| e.delta == delta).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Compute the resonance catalogue of a (normalized) graded system.
pub fn resonance_set(a0: &GradedSystem) -> Result<ResonanceSet> {
    let s = &a0.structure;
    let mut entries: Vec<ResonanceEntry> = Vec::new();
    let mut all_witnesses = Vec::new();
    for (i, j) in s.pairs_by_level() {
        let delta = s.level(i, j);
        for alpha in eigenvalues(&a0.diag[i]) {
            for beta in eigenvalues(&a0.diag[j]) {
                let witness = ResonanceWitness {
                    i,
                    j,
                    delta,
                    alpha,
                    beta,
                };
                all_witnesses.push(witness.clone());
                let ratio = alpha / beta;
                let root = ratio.powf(1.0 / delta as f64);
                for t in 0..delta {
                    let angle = 2.0 * std::f64::consts::PI * t as f64 / delta as f64;
                    let c = root * Complex64::from_polar(1.0, angle);
                    let class = EllipticPoint::new(c, a0.q)?;
                    if let Some(entry) = entries
                        .iter_mut()
                        .find(|e| e.delta == delta && e.class.same_class(&class, 1e-9))
                    {
                        entry.witnesses.push(witness.clone());
                    } else {
                        entries.push(ResonanceEntry {
                            delta,
                            class,
                            witnesses: vec![witness.clone()],
                        });
                    }
                }
            }
        }
    }
    // Deterministic order: by level, then representative.
    entries.sort_by(|a, b| {
        (a.delta, a.class.rep().re, a.class.rep().im)
            .partial_cmp(&(b.delta, b.class.rep().re, b.class.rep().im))
            .unwrap()
    });
    Ok(ResonanceSet {
        q: a0.q,
        entries,
        all_witnesses,
    })
}

/// Dimension of the level-`delta` isoformal parameter space:
/// `delta * sum_{mu_j - mu_i = delta} r_i r_j`.
pub fn irr_delta(a0: &GradedSystem, delta: i64) -> usize {
    let s = &a0.structure;
    let mut total = 0usize;
    for (i, j) in s.pairs_by_level() {
        if s.level(i, j) == delta {
            total += s.ranks[i] * s.ranks[j];
        }
    }
    total * delta.max(0) as usize
}

// ---------------------------------------------------------------------------
// Covariant lines and invariant sections of the pure group
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CovariantLine {
    /// Full-size vector supported on one slope block.
    pub vector: Vec<C64>,
    pub block: usize,
    pub eigenvalue: C64,
}

/// Basis of the lines fixed (projectively) by the pure group: one per
/// eigenvector of each constant block, embedded in the full space.
pub fn covariant_lines(a0: &GradedSystem) -> Vec<CovariantLine> {
    let s = &a0.structure;
    let mut out = Vec::new();
    for (i, a) in a0.diag.iter().enumerate() {
        let clusters = cluster_eigenvalues(&eigenvalues(a), 1e-8);
        for (lam, _) in clusters {
            let basis = eigenvector_basis(a, lam);
            for cidx in 0..basis.cols() {
                let mut v = vec![zero(); s.size()];
                for r in 0..basis.rows() {
                    v[s.offset(i) + r] = basis[(r, cidx)];
                }
                out.push(CovariantLine {
                    vector: v,
                    block: i,
                    eigenvalue: lam,
                });
            }
        }
    }
    out
}

/// Basis of the constant solutions of the graded system: vectors supported
/// on slope-zero blocks with `A_i X = X`.
pub fn invariant_sections(a0: &GradedSystem) -> Vec<Vec<C64>> {
    let s = &a0.structure;
    let mut out = Vec::new();
    for (i, a) in a0.diag.iter().enumerate() {
        if s.slopes[i] != 0 {
            continue;
        }
        let mut shifted = a.clone();
        for d in 0..a.rows() {
            shifted[(d, d)] -= one();
        }
        let basis = kernel_basis(&shifted, 1e-9);
        for cidx in 0..basis.cols() {
            let mut v = vec![zero(); s.size()];
            for r in 0..basis.rows() {
                v[s.offset(i) + r] = basis[(r, cidx)];
            }
            out.push(v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn q2() -> C64 {
        c(2.0, 0.0)
    }

    /// The anchor system: q = 2, slopes (0, 1), ranks (1, 1),
    /// A_1 = A_2 = (1), U_{1,2} = 1.
    pub fn estar() -> QSystem {
        let structure = BlockStructure::new(vec![0, 1], vec![1, 1]).unwrap();
        let mut off = BTreeMap::new();
        off.insert(
            (0, 1),
            TruncatedLaurentSeries::scalar_poly(&[(0, one())]),
        );
        QSystem::new(
            q2(),
            structure,
            vec![CMatrix::scalar(one()), CMatrix::scalar(one())],
            off,
        )
        .unwrap()
    }

    #[test]
    fn elliptic_representatives() {
        let q = q2();
        assert!((EllipticPoint::new(c(4.0, 0.0), q).unwrap().rep() - c(1.0, 0.0)).norm() < 1e-12);
        assert!((EllipticPoint::new(c(3.0, 0.0), q).unwrap().rep() - c(1.5, 0.0)).norm() < 1e-12);
        // boundary |z| = |q| maps to modulus 1
        let e = EllipticPoint::new(c(0.0, 2.0), q).unwrap();
        assert!((e.rep().norm() - 1.0).abs() < 1e-12);
        // class equality across representatives
        let a = EllipticPoint::new(c(1.3, 0.2), q).unwrap();
        let b = EllipticPoint::new(c(1.3, 0.2) * q.powi(3), q).unwrap();
        assert!(a.same_class(&b, 1e-9));
    }

    #[test]
    fn validate_flags() {
        let unit = QSystem::unit(q2());
        let d = unit.validate();
        assert!(d.pure && d.normalized && d.polynomial_form && d.diag_invertible);

        let e = estar();
        let d = e.validate();
        assert!(!d.pure && d.normalized && d.polynomial_form);

        // eigenvalue 2q = 4 is not normalized
        let structure = BlockStructure::new(vec![0], vec![1]).unwrap();
        let sys = QSystem::new(q2(), structure, vec![CMatrix::scalar(c(4.0, 0.0))], BTreeMap::new())
            .unwrap();
        assert!(!sys.validate().normalized);
    }

    #[test]
    fn normalize_scalar_block() {
        // A_1 = (2q) = (4): normalized representative is 1 with shift m = 2,
        // and the recorded gauge satisfies (sigma_q F) A = A' F.
        let structure = BlockStructure::new(vec![0], vec![1]).unwrap();
        let sys =
            QSystem::new(q2(), structure, vec![CMatrix::scalar(c(4.0, 0.0))], BTreeMap::new()).unwrap();
        let (norm, gauge) = normalize(&sys).unwrap();
        assert!((norm.diag[0][(0, 0)] - one()).norm() < 1e-12);
        assert_eq!(gauge.shifts[0][0].1, 2);
        let f = gauge.to_series(&sys.structure);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts = sample_points(&mut rng, q2(), 20);
        let rep = is_morphism(&f, &sys, &norm, &pts).unwrap();
        assert!(rep.max_residual() < 1e-12, "residual {}", rep.max_residual());
    }

    #[test]
    fn normalize_with_offdiag_bookkeeping() {
        // two blocks, upper block needs a shift; U must be re-expanded
        let structure = BlockStructure::new(vec![0, 1], vec![1, 1]).unwrap();
        let mut off = BTreeMap::new();
        off.insert((0, 1), TruncatedLaurentSeries::scalar_poly(&[(0, one())]));
        let sys = QSystem::new(
            q2(),
            structure,
            vec![CMatrix::scalar(c(4.0, 0.0)), CMatrix::scalar(one())],
            off,
        )
        .unwrap();
        let (norm, gauge) = normalize(&sys).unwrap();
        assert!(norm.normalized());
        let f = gauge.to_series(&sys.structure);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let pts = sample_points(&mut rng, q2(), 20);
        let rep = is_morphism(&f, &sys, &norm, &pts).unwrap();
        assert!(rep.max_residual() < 1e-12);
    }

    #[test]
    fn graded_drops_offdiag() {
        let e = estar();
        let g = e.graded();
        assert_eq!(g.diag.len(), 2);
        let s = g.to_system().to_series();
        assert!((s.coeff_or_zero(0)[(0, 0)] - one()).norm() < 1e-15);
        assert!(s.coeff_or_zero(0)[(0, 1)].norm() < 1e-15);
        assert!((s.coeff_or_zero(1)[(1, 1)] - one()).norm() < 1e-15);
    }

    #[test]
    fn tensor_with_unit_and_slope_addition() {
        let e = estar();
        let (t, _) = tensor(&e, &QSystem::unit(q2())).unwrap();
        assert_eq!(t.structure.slopes, vec![0, 1]);
        assert_eq!(t.structure.ranks, vec![1, 1]);

        // (z) tensor (z) = (z^2)
        let zsys = |mu: i64| {
            QSystem::new(
                q2(),
                BlockStructure::new(vec![mu], vec![1]).unwrap(),
                vec![CMatrix::scalar(one())],
                BTreeMap::new(),
            )
            .unwrap()
        };
        let (t, _) = tensor(&zsys(1), &zsys(1)).unwrap();
        assert_eq!(t.structure.slopes, vec![2]);
    }

    #[test]
    fn tensor_estar_square_structure() {
        let e = estar();
        let (t, layout) = tensor(&e, &e).unwrap();
        assert_eq!(t.structure.slopes, vec![0, 1, 2]);
        assert_eq!(t.structure.ranks, vec![1, 2, 1]);
        // pointwise identity (A (x) B)(z) = P (A(z) (x) B(z)) P^T
        let z = c(0.63, 0.21);
        let az = e.eval_at(z).unwrap();
        let kron = az.kron(&az);
        let lhs = t.eval_at(z).unwrap();
        let rhs = layout.permute_matrix(&kron);
        assert!((&lhs - &rhs).norm() < 1e-12);
        // graded commutes with tensor up to the same permutation
        let (gt, _) = tensor(&e.graded().to_system(), &e.graded().to_system()).unwrap();
        let lhs = t.graded().to_system().eval_at(z).unwrap();
        let rhs = gt.eval_at(z).unwrap();
        assert!((&lhs - &rhs).norm() < 1e-12);
    }

    #[test]
    fn dual_of_unit_and_graded() {
        let u = QSystem::unit(q2());
        let d = dual(&u).unwrap();
        assert_eq!(d.structure.slopes, vec![0]);
        assert!((d.diag[0][(0, 0)] - one()).norm() < 1e-14);

        // dual(diag(1, z)) has slopes (-1, 0)
        let g = estar().graded().to_system();
        let d = dual(&g).unwrap();
        assert_eq!(d.structure.slopes, vec![-1, 0]);
    }

    #[test]
    fn double_dual_gauge_equivalent_to_estar() {
        let e = estar();
        let dd = dual(&dual(&e).unwrap()).unwrap();
        assert_eq!(dd.structure.slopes, e.structure.slopes);
        // here the double dual reproduces the anchor on the nose, so the
        // identity is the gauge
        let f = TruncatedLaurentSeries::monomial(0, CMatrix::identity(2));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pts = sample_points(&mut rng, q2(), 20);
        let rep = is_morphism(&f, &e, &dd, &pts).unwrap();
        assert!(rep.max_residual() < 1e-12, "residual {}", rep.max_residual());
    }

    #[test]
    fn internal_hom_of_unit() {
        let e = estar();
        let (h, _) = internal_hom(&QSystem::unit(q2()), &e).unwrap();
        assert_eq!(h.structure.slopes, e.structure.slopes);
        let (h2, _) = internal_hom(&e, &QSystem::unit(q2())).unwrap();
        assert_eq!(h2.structure.slopes, vec![-1, 0]);
    }

    #[test]
    fn morphism_identity_and_negative_control() {
        let e = estar();
        let f = TruncatedLaurentSeries::monomial(0, CMatrix::identity(2));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let pts = sample_points(&mut rng, q2(), 20);
        let rep = is_morphism(&f, &e, &e, &pts).unwrap();
        assert!(rep.max_residual() == 0.0);

        let mut bad = CMatrix::identity(2);
        bad[(1, 0)] = c(0.37, 0.8);
        let f = TruncatedLaurentSeries::monomial(0, bad);
        let rep = is_morphism(&f, &e, &e, &pts).unwrap();
        assert!(rep.max_residual() > 1e-3, "negative control must fail");
    }

    #[test]
    fn resonances_of_estar() {
        let rs = resonance_set(&estar().graded()).unwrap();
        assert_eq!(rs.entries.len(), 1);
        assert!((rs.entries[0].class.rep() - one()).norm() < 1e-12);
        assert_eq!(rs.entries[0].delta, 1);
        // margin at the resonant class is ~0; at -1 it is far
        assert!(rs.margin(one()).unwrap().0 < 1e-12);
        assert!(rs.margin(c(-1.0, 0.0)).unwrap().0 > 0.5);
        // pure single block: empty
        let single = QSystem::unit(q2()).graded();
        assert!(resonance_set(&single).unwrap().is_empty());
    }

    #[test]
    fn resonance_square_roots() {
        // delta = 2 with alpha/beta = q: the two exact roots are +-sqrt(q),
        // while the coarse locus (caught by margin) also passes through 1.
        let structure = BlockStructure::new(vec![0, 2], vec![1, 1]).unwrap();
        let g = GradedSystem {
            q: q2(),
            structure,
            diag: vec![CMatrix::scalar(c(1.9, 0.0)), CMatrix::scalar(c(0.95, 0.0))],
        };
        let rs = resonance_set(&g).unwrap();
        assert_eq!(rs.entries.len(), 2);
        let root = (1.9f64 / 0.95).sqrt();
        let mut reps: Vec<C64> = rs.entries.iter().map(|e| e.class.rep()).collect();
        reps.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((reps[1] - c(root, 0.0)).norm() < 1e-9);
        // -sqrt(2) has modulus sqrt(2) in the annulus already
        assert!((reps[0] - c(-root, 0.0)).norm() < 1e-9);
        // the q-translate branch: c = 1 satisfies c^2 q = 2 = alpha/beta
        let m = rs.margin(one()).unwrap().0;
        assert!(m < 1e-9, "coarse resonance at 1 must be caught: {m}");
    }

    #[test]
    fn irr_dimensions() {
        assert_eq!(irr_delta(&estar().graded(), 1), 1);
        assert_eq!(irr_delta(&estar().graded(), 2), 0);
        let structure = BlockStructure::new(vec![0, 1, 2], vec![1, 1, 1]).unwrap();
        let g = GradedSystem {
            q: q2(),
            structure,
            diag: vec![
                CMatrix::scalar(one()),
                CMatrix::scalar(c(1.3, 0.4)),
                CMatrix::scalar(one()),
            ],
        };
        assert_eq!(irr_delta(&g, 1), 2);
        assert_eq!(irr_delta(&g, 2), 2);
        // combinatorial identity: sum of irr over levels equals the free
        // polynomial coefficient count
        let total: usize = [1i64, 2].iter().map(|&d| irr_delta(&g, d)).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn covariant_and_invariant_vectors() {
        let g = estar().graded();
        let lines = covariant_lines(&g);
        assert_eq!(lines.len(), 2);
        // identity A_0(z) X = alpha z^{mu} X holds per coefficient
        let s = g.to_system().to_series();
        for line in &lines {
            let mu = g.structure.slopes[line.block];
            for d in s.n_min()..=s.n_max() {
                let lhs = s.coeff(d).unwrap().mat_vec(&line.vector);
                let rhs: Vec<C64> = line
                    .vector
                    .iter()
                    .map(|&x| if d == mu { line.eigenvalue * x } else { zero() })
                    .collect();
                for (l, r) in lhs.iter().zip(rhs.iter()) {
                    assert!((l - r).norm() < 1e-12);
                }
            }
        }
        let sections = invariant_sections(&g);
        assert_eq!(sections.len(), 1);
        assert!((sections[0][0] - one()).norm() < 1e-12);

        // Jordan block: a single covariant line
        let structure = BlockStructure::new(vec![0], vec![2]).unwrap();
        let j = CMatrix::from_rows(&[vec![one(), one()], vec![zero(), one()]]);
        let g = GradedSystem {
            q: q2(),
            structure,
            diag: vec![j],
        };
        assert_eq!(covariant_lines(&g).len(), 1);

        // no slope-zero block: no sections; eigenvalue 2 on slope 0: none
        let structure = BlockStructure::new(vec![1], vec![1]).unwrap();
        let g = GradedSystem {
            q: q2(),
            structure,
            diag: vec![CMatrix::scalar(one())],
        };
        assert!(invariant_sections(&g).is_empty());
        let structure = BlockStructure::new(vec![0], vec![1]).unwrap();
        let g = GradedSystem {
            q: q2(),
            structure,
            diag: vec![CMatrix::scalar(c(1.7, 0.0))],
        };
        assert!(invariant_sections(&g).is_empty());
    }
}
