//! The shipped example systems: every code path referenced by the check
//! suites runs over these.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::matrix::{one, C64, CMatrix};
use crate::qsystem::{tensor, QSystem, TensorLayout};
use crate::series::TruncatedLaurentSeries;
use crate::structure::BlockStructure;

pub fn q_default() -> C64 {
    Complex64::new(2.0, 0.0)
}

/// The unit object `(1)`.
pub fn unit() -> QSystem {
    QSystem::unit(q_default())
}

/// The anchor: q = 2, slopes (0, 1), ranks (1, 1), unit diagonal blocks,
/// `U_{1,2} = 1`. Its formal gauge block is the divergent series with
/// coefficients `-q^{n(n-1)/2}`.
pub fn estar() -> QSystem {
    estar_with(one())
}

/// The anchor with a prescribed over-diagonal constant.
pub fn estar_with(u: C64) -> QSystem {
    let structure = BlockStructure::new(vec![0, 1], vec![1, 1]).unwrap();
    let mut off = BTreeMap::new();
    off.insert((0, 1), TruncatedLaurentSeries::scalar_poly(&[(0, u)]));
    QSystem::new(
        q_default(),
        structure,
        vec![CMatrix::scalar(one()), CMatrix::scalar(one())],
        off,
    )
    .unwrap()
}

/// Three slopes (0, 1, 2) with ranks (1, 1, 1), two levels, all four
/// polynomial coefficients populated.
pub fn three_slope() -> QSystem {
    three_slope_with(
        Complex64::new(0.8, 0.1),
        Complex64::new(1.0, -0.4),
        Complex64::new(0.3, 0.0),
        Complex64::new(-0.2, 0.5),
    )
}

pub fn three_slope_with(u01: C64, u12: C64, u02_0: C64, u02_1: C64) -> QSystem {
    let structure = BlockStructure::new(vec![0, 1, 2], vec![1, 1, 1]).unwrap();
    let mut off = BTreeMap::new();
    off.insert((0, 1), TruncatedLaurentSeries::scalar_poly(&[(0, u01)]));
    off.insert((1, 2), TruncatedLaurentSeries::scalar_poly(&[(1, u12)]));
    off.insert(
        (0, 2),
        TruncatedLaurentSeries::scalar_poly(&[(0, u02_0), (1, u02_1)]),
    );
    QSystem::new(
        q_default(),
        structure,
        vec![
            CMatrix::scalar(one()),
            CMatrix::scalar(Complex64::new(1.3, 0.4)),
            CMatrix::scalar(one()),
        ],
        off,
    )
    .unwrap()
}

/// The tensor square of the anchor, regrouped to slopes (0, 1, 2) with
/// ranks (1, 2, 1).
pub fn estar_tensor() -> (QSystem, TensorLayout) {
    let e = estar();
    tensor(&e, &e).unwrap()
}

/// Fuchsian-top example with a rank-2 slope-0 block carrying two
/// eigenvalue classes (1 and -1.3), exercising characters and per-class
/// spectral projections.
pub fn fuchsian_top() -> QSystem {
    let structure = BlockStructure::new(vec![0, 1], vec![2, 1]).unwrap();
    let mut off = BTreeMap::new();
    let mut u = TruncatedLaurentSeries::zeros(0, 0, 2, 1);
    u.coeff_mut(0)[(0, 0)] = one();
    u.coeff_mut(0)[(1, 0)] = one();
    off.insert((0, 1), u);
    QSystem::new(
        q_default(),
        structure,
        vec![
            CMatrix::diag(&[one(), Complex64::new(-1.3, 0.0)]),
            CMatrix::scalar(one()),
        ],
        off,
    )
    .unwrap()
}

/// Anchor-type system with ranks (1, 2) whose first over-diagonal column
/// is the coboundary `z - 1`: the covariant vector of the top block's
/// first basis direction is annihilated by every alien derivation, and the
/// corresponding summed solution is a convergent constant.
pub fn coboundary_estar() -> QSystem {
    let structure = BlockStructure::new(vec![0, 1], vec![1, 2]).unwrap();
    let mut off = BTreeMap::new();
    let mut u = TruncatedLaurentSeries::zeros(0, 1, 1, 2);
    u.coeff_mut(0)[(0, 0)] = -one(); // z - 1 in column one
    u.coeff_mut(1)[(0, 0)] = one();
    u.coeff_mut(0)[(0, 1)] = one(); // plain anchor forcing in column two
    off.insert((0, 1), u);
    QSystem::new(
        q_default(),
        structure,
        vec![CMatrix::scalar(one()), CMatrix::identity(2)],
        off,
    )
    .unwrap()
}

/// Sections counter-example: slopes (-1, 0), `U_{1,2} = z^{-1}`. The
/// slope-zero invariant section is paired by a non-trivial alien
/// derivation, so the system has no non-zero section.
pub fn sections_counterexample() -> QSystem {
    let structure = BlockStructure::new(vec![-1, 0], vec![1, 1]).unwrap();
    let mut off = BTreeMap::new();
    off.insert((0, 1), TruncatedLaurentSeries::scalar_poly(&[(-1, one())]));
    QSystem::new(
        q_default(),
        structure,
        vec![CMatrix::scalar(one()), CMatrix::scalar(one())],
        off,
    )
    .unwrap()
}

/// The sub-system of the first `upto` blocks (slope truncation from below),
/// together with the constant inclusion morphism into the original.
pub fn sub_system(a: &QSystem, upto: usize) -> (QSystem, CMatrix) {
    assert!(upto >= 1 && upto <= a.structure.block_count());
    let slopes = a.structure.slopes[..upto].to_vec();
    let ranks = a.structure.ranks[..upto].to_vec();
    let structure = BlockStructure::new(slopes, ranks).unwrap();
    let diag = a.diag[..upto].to_vec();
    let mut off = BTreeMap::new();
    for (&(i, j), u) in &a.offdiag {
        if j < upto {
            off.insert((i, j), u.clone());
        }
    }
    let sub = QSystem::new(a.q, structure, diag, off).unwrap();
    let n = a.size();
    let n_sub = sub.size();
    let mut phi = CMatrix::zeros(n, n_sub);
    for k in 0..n_sub {
        phi[(k, k)] = one();
    }
    (sub, phi)
}

/// Names understood by the CLI and the check runner.
pub fn by_name(name: &str) -> Option<QSystem> {
    match name {
        "unit" => Some(unit()),
        "estar" => Some(estar()),
        "three_slope" => Some(three_slope()),
        "estar_tensor" => Some(estar_tensor().0),
        "fuchsian_top" => Some(fuchsian_top()),
        "coboundary_estar" => Some(coboundary_estar()),
        "sections_counterexample" => Some(sections_counterexample()),
        _ => None,
    }
}

pub const CORPUS_NAMES: &[&str] = &[
    "unit",
    "estar",
    "three_slope",
    "estar_tensor",
    "fuchsian_top",
    "coboundary_estar",
    "sections_counterexample",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_valid() {
        for name in CORPUS_NAMES {
            let sys = by_name(name).unwrap();
            let d = sys.validate();
            assert!(d.shape_ok && d.diag_invertible, "{name} must validate");
        }
        // flags of the anchor
        let d = estar().validate();
        assert!(d.polynomial_form && d.normalized && !d.pure);
    }

    #[test]
    fn sub_system_inclusion_is_morphism() {
        let a = three_slope();
        let (sub, phi) = sub_system(&a, 2);
        assert_eq!(sub.structure.slopes, vec![0, 1]);
        let f = TruncatedLaurentSeries::monomial(0, phi);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let pts = crate::qsystem::sample_points(&mut rng, a.q, 20);
        let rep = crate::qsystem::is_morphism(&f, &sub, &a, &pts).unwrap();
        assert!(rep.max_residual() < 1e-12, "residual {}", rep.max_residual());
    }
}
