//! Isoformal classification and the inverse problem: rebuilding a system
//! from its graded part plus alien-derivation targets, level by level.
//!
//! Two systems over the same graded part are equivalent through level
//! `delta` when their over-diagonals agree up to that level (the constant
//! gauge is restricted to the identity here; classes are separated through
//! their alien invariants instead). The key affine structure: for two
//! extensions of the same level-`(delta-1)` truncation, the difference of
//! their level-`delta` alien derivations lies in the `(delta, class)`
//! eigenspace and depends *linearly* on the difference of the level-`delta`
//! coefficients. Reconstruction therefore assembles, per level, a square
//! linear transfer map from the polynomial coefficient space (dimension
//! `irr^delta`) onto the stacked eigen-coordinates of the targeted residues
//! and solves it.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::galois::{alien_derivation, eigen_frame, AlienParams, NilpotentBlockMatrix};
use crate::matrix::{C64, CMatrix};
use crate::qsystem::{lattice_distance, resonance_set, EllipticPoint, GradedSystem, QSystem};
use crate::series::TruncatedLaurentSeries;

// ---------------------------------------------------------------------------
// Level truncation and equivalence
// ---------------------------------------------------------------------------

/// A system whose over-diagonal is guaranteed to vanish above a level.
#[derive(Clone, Debug)]
pub struct LevelTruncation {
    pub system: QSystem,
    pub level: i64,
}

/// Zero out every block of level greater than `delta`.
pub fn truncate_to_level(a: &QSystem, delta: i64) -> LevelTruncation {
    let mut sys = a.clone();
    sys.offdiag
        .retain(|&(i, j), _| a.structure.level(i, j) <= delta);
    LevelTruncation { system: sys, level: delta }
}

/// Equality of over-diagonals through level `delta`, to tolerance. Only the
/// identity constant gauge is supported; callers asking for a gauge search
/// get `UnsupportedGaugeSearch`.
pub fn level_equivalent(
    a: &QSystem,
    b: &QSystem,
    delta: i64,
    allow_gauge_search: bool,
    tol: f64,
) -> Result<bool> {
    if allow_gauge_search {
        return Err(Error::UnsupportedGaugeSearch);
    }
    if a.structure != b.structure {
        return Ok(false);
    }
    let scale = a
        .offdiag
        .values()
        .chain(b.offdiag.values())
        .map(|u| u.max_coeff_norm())
        .fold(1.0f64, f64::max);
    for (i, j) in a.structure.pairs_by_level() {
        if a.structure.level(i, j) > delta {
            continue;
        }
        let ua = a.offdiag.get(&(i, j));
        let ub = b.offdiag.get(&(i, j));
        let diff = match (ua, ub) {
            (None, None) => 0.0,
            (Some(u), None) | (None, Some(u)) => u.max_coeff_norm(),
            (Some(ua), Some(ub)) => ua.sub(ub)?.max_coeff_norm(),
        };
        if diff > tol * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Alien targets
// ---------------------------------------------------------------------------

/// Prescribed alien derivations per `(level, resonant class)`.
#[derive(Clone, Debug)]
pub struct AlienTarget {
    pub entries: Vec<(i64, EllipticPoint, CMatrix)>,
}

impl AlienTarget {
    pub fn levels(&self) -> Vec<i64> {
        let mut l: Vec<i64> = self.entries.iter().map(|e| e.0).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn at_level(&self, delta: i64) -> Vec<(&EllipticPoint, &CMatrix)> {
        self.entries
            .iter()
            .filter(|e| e.0 == delta)
            .map(|e| (&e.1, &e.2))
            .collect()
    }
}

/// Forward map: compute the targets of an existing system at every
/// catalogued resonant class (the data reconstruct_full inverts).
pub fn alien_targets(a: &QSystem, params: &AlienParams) -> Result<AlienTarget> {
    let rs = resonance_set(&a.graded())?;
    let mut entries = Vec::new();
    for entry in &rs.entries {
        let d = alien_derivation(a, &entry.class, params)?;
        let level = d
            .per_level
            .get(&entry.delta)
            .cloned()
            .unwrap_or_else(|| NilpotentBlockMatrix::zero(&a.structure));
        entries.push((entry.delta, entry.class, level.value));
    }
    Ok(AlienTarget { entries })
}

// ---------------------------------------------------------------------------
// Eigen-coordinates of the (delta, class) eigenspaces
// ---------------------------------------------------------------------------

/// Coordinates of a level-`delta` block matrix on the resonant eigen-pairs
/// of a class: entries of `W_i^{-1} D_{ij} W_j` at positions `(s, t)` with
/// `alpha_s c^{mu_i} = beta_t c^{mu_j}` modulo `q^Z`.
struct EigenCoords {
    /// (block i, block j, row s, col t) per coordinate
    support: Vec<(usize, usize, usize, usize)>,
    frames: BTreeMap<usize, (CMatrix, CMatrix, Vec<C64>)>,
}

fn eigen_coords(a0: &GradedSystem, delta: i64, c: &EllipticPoint) -> Result<EigenCoords> {
    let s = &a0.structure;
    let mut frames = BTreeMap::new();
    for i in 0..s.block_count() {
        frames.insert(i, eigen_frame(&a0.diag[i])?);
    }
    let mut support = Vec::new();
    let c_rep = c.rep();
    for (i, j) in s.pairs_by_level() {
        if s.level(i, j) != delta {
            continue;
        }
        let alphas = &frames[&i].2;
        let betas = &frames[&j].2;
        for (si, &alpha) in alphas.iter().enumerate() {
            for (tj, &beta) in betas.iter().enumerate() {
                let w = (alpha * c_rep.powi(s.slopes[i] as i32))
                    / (beta * c_rep.powi(s.slopes[j] as i32));
                if lattice_distance(w.ln(), a0.q) <= 1e-6 {
                    support.push((i, j, si, tj));
                }
            }
        }
    }
    Ok(EigenCoords { support, frames })
}

impl EigenCoords {
    fn extract(&self, d: &NilpotentBlockMatrix) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.support.len());
        let mut cache: BTreeMap<(usize, usize), CMatrix> = BTreeMap::new();
        for &(i, j, si, tj) in &self.support {
            let hat = cache.entry((i, j)).or_insert_with(|| {
                let wi_inv = &self.frames[&i].1;
                let wj = &self.frames[&j].0;
                &(wi_inv * &d.block(i, j)) * wj
            });
            out.push(hat[(si, tj)]);
        }
        out
    }

    fn len(&self) -> usize {
        self.support.len()
    }
}

// ---------------------------------------------------------------------------
// Level-by-level reconstruction
// ---------------------------------------------------------------------------

/// Basis of the polynomial level-`delta` coefficient space: one monomial
/// entry per block of that level, per matrix position, per degree in
/// `[mu_i, mu_j)`.
fn coefficient_basis(a0: &GradedSystem, delta: i64) -> Vec<((usize, usize), usize, usize, i64)> {
    let s = &a0.structure;
    let mut out = Vec::new();
    for (i, j) in s.pairs_by_level() {
        if s.level(i, j) != delta {
            continue;
        }
        for r in 0..s.ranks[i] {
            for c in 0..s.ranks[j] {
                for d in s.slopes[i]..s.slopes[j] {
                    out.push(((i, j), r, c, d));
                }
            }
        }
    }
    out
}

fn with_added_coefficient(
    base: &QSystem,
    entry: &((usize, usize), usize, usize, i64),
    value: C64,
) -> QSystem {
    let &((i, j), r, c, d) = entry;
    let mut sys = base.clone();
    let (ri, rj) = (sys.structure.ranks[i], sys.structure.ranks[j]);
    let mut block = match sys.offdiag.get(&(i, j)) {
        Some(u) => {
            let lo = u.n_min().min(d);
            let hi = u.n_max().max(d);
            let mut w = TruncatedLaurentSeries::zeros(lo, hi, ri, rj);
            for dd in u.n_min()..=u.n_max() {
                w.set_coeff(dd, u.coeff(dd).unwrap().clone());
            }
            w
        }
        None => TruncatedLaurentSeries::zeros(d, d, ri, rj),
    };
    block.coeff_mut(d)[(r, c)] += value;
    sys.offdiag.insert((i, j), block);
    sys
}

/// Report of one reconstruction level.
#[derive(Clone, Debug)]
pub struct LevelReport {
    pub delta: i64,
    /// Side length of the square transfer map (`irr^delta`).
    pub transfer_dim: usize,
    /// Condition estimate of the transfer map.
    pub condition: f64,
    /// Residual of the recomputed targets against the prescribed ones.
    pub residual: f64,
}

/// The assembled level-`delta` transfer data: the square linear map from
/// polynomial coefficients to stacked residue eigen-coordinates, the
/// residues of the base system, and the classes in stacking order.
pub struct TransferAssembly {
    pub transfer: CMatrix,
    pub base_vec: Vec<C64>,
    pub classes: Vec<EllipticPoint>,
    coords: Vec<EigenCoords>,
    basis: Vec<((usize, usize), usize, usize, i64)>,
}

/// Assemble the level-`delta` transfer map on top of `base` (a system with
/// zero over-diagonal at that level) by one residue evaluation per basis
/// coefficient; affineness of the level residues makes this exact.
pub fn assemble_transfer_map(
    base: &QSystem,
    delta: i64,
    params: &AlienParams,
) -> Result<TransferAssembly> {
    let a0 = base.graded();
    let rs = resonance_set(&a0)?;
    let classes: Vec<EllipticPoint> = rs
        .classes_at_level(delta)
        .iter()
        .map(|e| e.class)
        .collect();
    let basis = coefficient_basis(&a0, delta);
    let coords: Vec<EigenCoords> = classes
        .iter()
        .map(|c| eigen_coords(&a0, delta, c))
        .collect::<Result<_>>()?;
    let total: usize = coords.iter().map(|c| c.len()).sum();
    if total != basis.len() {
        return Err(Error::TargetOutsideRange(format!(
            "coordinate space has dimension {total}, coefficient space {}",
            basis.len()
        )));
    }
    let base_vec = stacked_residues(base, delta, &classes, &coords, params)?;
    let m_dim = basis.len();
    let mut transfer = CMatrix::zeros(m_dim, m_dim);
    for (col, entry) in basis.iter().enumerate() {
        let probe = with_added_coefficient(base, entry, C64::new(1.0, 0.0));
        let vec = stacked_residues(&probe, delta, &classes, &coords, params)?;
        for row in 0..m_dim {
            transfer[(row, col)] = vec[row] - base_vec[row];
        }
    }
    Ok(TransferAssembly {
        transfer,
        base_vec,
        classes,
        coords,
        basis,
    })
}

/// Extend a level-`(delta-1)` truncation by the level-`delta`
/// over-diagonal matching the prescribed targets.
///
/// The transfer map is assembled by evaluating the full residue pipeline
/// once per basis coefficient on top of the zero-extension; affineness of
/// the level-`delta` residues makes one evaluation per basis vector exact.
pub fn reconstruct_level(
    b: &LevelTruncation,
    targets: &AlienTarget,
    delta: i64,
    params: &AlienParams,
) -> Result<(LevelTruncation, LevelReport)> {
    let a0 = b.system.graded();
    if coefficient_basis(&a0, delta).is_empty() {
        return Ok((
            LevelTruncation {
                system: b.system.clone(),
                level: delta,
            },
            LevelReport {
                delta,
                transfer_dim: 0,
                condition: 1.0,
                residual: 0.0,
            },
        ));
    }
    let assembly = assemble_transfer_map(&b.system, delta, params)?;
    let TransferAssembly {
        transfer,
        base_vec,
        classes,
        coords,
        basis,
    } = assembly;
    // Stack the prescribed targets in eigen-coordinates.
    let mut rhs_t = Vec::with_capacity(base_vec.len());
    for (cls, co) in classes.iter().zip(&coords) {
        let prescribed = targets
            .at_level(delta)
            .into_iter()
            .find(|(p, _)| p.same_class(cls, 1e-9));
        let m = match prescribed {
            Some((_, m)) => NilpotentBlockMatrix::new(&a0.structure, m.clone(), 1e-6)?,
            None => {
                return Err(Error::TargetOutsideRange(format!(
                    "no target prescribed at level {delta}, class {}",
                    cls.rep()
                )))
            }
        };
        rhs_t.extend(co.extract(&m));
    }
    let base_sys = b.system.clone();
    let m_dim = basis.len();
    let condition = transfer.condition_estimate();
    if !condition.is_finite() || condition > 1e8 {
        return Err(Error::SingularTransferMap(condition));
    }
    // Solve L u = targets - base.
    let rhs: Vec<C64> = rhs_t
        .iter()
        .zip(&base_vec)
        .map(|(t, b)| *t - *b)
        .collect();
    let u = transfer.lu(1e-14)?.solve_vec(&rhs)?;
    let mut out = base_sys;
    for (entry, &coef) in basis.iter().zip(&u) {
        out = with_added_coefficient(&out, entry, coef);
    }
    // Residual: recompute the residues of the reconstructed system.
    let achieved = stacked_residues(&out, delta, &classes, &coords, params)?;
    let scale = rhs_t
        .iter()
        .map(|v| v.norm())
        .fold(1e-300, f64::max)
        .max(1.0);
    let residual = achieved
        .iter()
        .zip(&rhs_t)
        .map(|(a, t)| (a - t).norm())
        .fold(0.0f64, f64::max)
        / scale;
    Ok((
        LevelTruncation {
            system: out,
            level: delta,
        },
        LevelReport {
            delta,
            transfer_dim: m_dim,
            condition,
            residual,
        },
    ))
}

fn stacked_residues(
    sys: &QSystem,
    delta: i64,
    classes: &[EllipticPoint],
    coords: &[EigenCoords],
    params: &AlienParams,
) -> Result<Vec<C64>> {
    let mut out = Vec::new();
    for (cls, co) in classes.iter().zip(coords) {
        let d = alien_derivation(sys, cls, params)?;
        let lvl = d
            .per_level
            .get(&delta)
            .cloned()
            .unwrap_or_else(|| NilpotentBlockMatrix::zero(&sys.structure));
        out.extend(co.extract(&lvl));
    }
    Ok(out)
}

/// Rebuild a full system from its graded part and a complete family of
/// alien targets, iterating `reconstruct_level` over increasing levels.
pub fn reconstruct_full(
    a0: &GradedSystem,
    targets: &AlienTarget,
    params: &AlienParams,
) -> Result<(QSystem, Vec<LevelReport>)> {
    let mut current = LevelTruncation {
        system: a0.to_system(),
        level: 0,
    };
    let mut reports = Vec::new();
    for delta in a0.structure.levels() {
        let (next, report) = reconstruct_level(&current, targets, delta, params)
            .map_err(|e| match e {
                Error::TargetOutsideRange(m) => {
                    Error::TargetOutsideRange(format!("level {delta}: {m}"))
                }
                other => other,
            })?;
        reports.push(report);
        current = next;
    }
    Ok((current.system, reports))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{one, CMatrix};
    use crate::series::TruncatedLaurentSeries;
    use crate::structure::BlockStructure;
    use num_complex::Complex64;
    use std::collections::BTreeMap;

    fn c64(re: f64, im: f64) -> C64 {
        Complex64::new(re, im)
    }

    fn q2() -> C64 {
        c64(2.0, 0.0)
    }

    fn estar_with(u: C64) -> QSystem {
        let structure = BlockStructure::new(vec![0, 1], vec![1, 1]).unwrap();
        let mut off = BTreeMap::new();
        off.insert((0, 1), TruncatedLaurentSeries::scalar_poly(&[(0, u)]));
        QSystem::new(
            q2(),
            structure,
            vec![CMatrix::scalar(one()), CMatrix::scalar(one())],
            off,
        )
        .unwrap()
    }

    fn three_slope(u01: C64, u12: C64, u02_0: C64, u02_1: C64) -> QSystem {
        let structure = BlockStructure::new(vec![0, 1, 2], vec![1, 1, 1]).unwrap();
        let mut off = BTreeMap::new();
        off.insert((0, 1), TruncatedLaurentSeries::scalar_poly(&[(0, u01)]));
        off.insert((1, 2), TruncatedLaurentSeries::scalar_poly(&[(1, u12)]));
        off.insert(
            (0, 2),
            TruncatedLaurentSeries::scalar_poly(&[(0, u02_0), (1, u02_1)]),
        );
        QSystem::new(
            q2(),
            structure,
            vec![
                CMatrix::scalar(one()),
                CMatrix::scalar(c64(1.3, 0.4)),
                CMatrix::scalar(one()),
            ],
            off,
        )
        .unwrap()
    }

    #[test]
    fn truncation_levels() {
        let sys = three_slope(one(), one(), one(), one());
        let t0 = truncate_to_level(&sys, 0);
        assert!(t0.system.offdiag.is_empty());
        let t1 = truncate_to_level(&sys, 1);
        assert!(t1.system.offdiag.contains_key(&(0, 1)));
        assert!(t1.system.offdiag.contains_key(&(1, 2)));
        assert!(!t1.system.offdiag.contains_key(&(0, 2)));
        let t2 = truncate_to_level(&sys, 2);
        assert_eq!(t2.system.offdiag.len(), 3);
    }

    #[test]
    fn level_equivalence_and_gauge_search_guard() {
        let a = three_slope(one(), one(), one(), one());
        let mut b = a.clone();
        assert!(level_equivalent(&a, &b, 2, false, 1e-10).unwrap());
        b.offdiag.insert(
            (0, 2),
            TruncatedLaurentSeries::scalar_poly(&[(0, c64(2.0, 0.0)), (1, one())]),
        );
        assert!(level_equivalent(&a, &b, 1, false, 1e-10).unwrap());
        assert!(!level_equivalent(&a, &b, 2, false, 1e-10).unwrap());
        assert!(matches!(
            level_equivalent(&a, &b, 2, true, 1e-10),
            Err(Error::UnsupportedGaugeSearch)
        ));
        // E* with a different coefficient is separated at level 1
        let e1 = estar_with(one());
        let e2 = estar_with(c64(2.0, 0.0));
        assert!(!level_equivalent(&e1, &e2, 1, false, 1e-10).unwrap());
    }

    #[test]
    fn estar_round_trip() {
        let params = AlienParams::default();
        let sys = estar_with(one());
        let targets = alien_targets(&sys, &params).unwrap();
        // base (zero) extension maps to u = 0
        let (rec, reports) = reconstruct_full(&sys.graded(), &targets, &params).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].transfer_dim, 1);
        let got = rec.offdiag[&(0, 1)].coeff_or_zero(0)[(0, 0)];
        assert!(
            (got - one()).norm() <= 1e-6,
            "reconstructed {got}, residual {}",
            reports[0].residual
        );
        assert!(reports[0].residual <= 1e-6);
    }

    #[test]
    fn base_targets_give_zero_extension() {
        // prescribing exactly the residues of the zero-extension returns it
        let params = AlienParams::default();
        let sys = estar_with(one());
        let base = truncate_to_level(&sys, 0);
        let targets = alien_targets(&base.system, &params).unwrap();
        let (rec, reports) = reconstruct_full(&sys.graded(), &targets, &params).unwrap();
        let got = rec
            .offdiag
            .get(&(0, 1))
            .map(|u| u.max_coeff_norm())
            .unwrap_or(0.0);
        assert!(got <= 1e-8, "coefficients {got}");
        assert!(reports[0].residual <= 1e-6);
    }

    #[test]
    fn three_slope_round_trip_two_levels() {
        let params = AlienParams::default();
        let sys = three_slope(
            c64(0.8, 0.1),
            c64(1.0, -0.4),
            c64(0.3, 0.0),
            c64(-0.2, 0.5),
        );
        let targets = alien_targets(&sys, &params).unwrap();
        assert_eq!(targets.levels(), vec![1, 2]);
        let (rec, reports) = reconstruct_full(&sys.graded(), &targets, &params).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].transfer_dim, 2);
        assert_eq!(reports[1].transfer_dim, 2);
        for ((key, u), (_, v)) in rec.offdiag.iter().zip(sys.offdiag.iter()) {
            let lo = u.n_min().min(v.n_min());
            let hi = u.n_max().max(v.n_max());
            for d in lo..=hi {
                let a = u.coeff_or_zero(d)[(0, 0)];
                let b = v.coeff_or_zero(d)[(0, 0)];
                assert!(
                    (a - b).norm() <= 1e-5 * b.norm().max(1.0),
                    "block {key:?} degree {d}: {a} vs {b}"
                );
            }
        }
        for r in &reports {
            assert!(r.condition < 1e6, "condition {}", r.condition);
            assert!(r.residual <= 1e-5, "residual {}", r.residual);
        }
    }

    #[test]
    fn affineness_of_level_residues() {
        // for two random level-2 extensions of the same base, the
        // difference of level-2 residues lies in the (2, class) eigenspace
        // and the composed affine map is consistent
        let params = AlienParams::default();
        let a = three_slope(c64(0.8, 0.1), c64(1.0, -0.4), c64(0.3, 0.0), c64(-0.2, 0.5));
        let b = three_slope(c64(0.8, 0.1), c64(1.0, -0.4), c64(-1.1, 0.2), c64(0.6, 0.6));
        let rs = resonance_set(&a.graded()).unwrap();
        for entry in rs.classes_at_level(2) {
            let da = alien_derivation(&a, &entry.class, &params).unwrap();
            let db = alien_derivation(&b, &entry.class, &params).unwrap();
            let diff = da.per_level[&2].sub(&db.per_level[&2]);
            let proj =
                crate::galois::spectral_project(&diff, &a.graded(), 2, &entry.class).unwrap();
            let outside = diff.sub(&proj).norm();
            assert!(outside <= 1e-8 * diff.norm().max(1.0), "outside {outside}");
            // level-1 residues agree (monotone locality)
            let l1 = da.per_level[&1].sub(&db.per_level[&1]).norm();
            assert!(l1 <= 1e-8 * da.per_level[&1].norm().max(1.0), "level-1 moved {l1}");
        }
    }
}
