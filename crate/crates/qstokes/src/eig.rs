//! Eigenvalues and spectral structure of small complex matrices.
//!
//! A Hessenberg reduction followed by a shifted QR iteration with Givens
//! rotations covers the block sizes that occur here. On top of the raw
//! eigenvalues we provide clustering, kernels, spectral projectors onto
//! generalized eigenspaces and the multiplicative Dunford decomposition
//! `A = A_s * A_u` (semisimple times unipotent, commuting).


use crate::error::{Error, Result};
use crate::matrix::{one, zero, C64, CMatrix};

const MAX_QR_SWEEPS: usize = 200;

/// All eigenvalues of a square complex matrix, unordered.
pub fn eigenvalues(a: &CMatrix) -> Vec<C64> {
    assert!(a.is_square());
    let n = a.rows();
    match n {
        0 => vec![],
        1 => vec![a[(0, 0)]],
        2 => eig2(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]).to_vec(),
        _ => {
            let mut h = hessenberg(a);
            qr_eigenvalues(&mut h)
        }
    }
}

fn eig2(a: C64, b: C64, c: C64, d: C64) -> [C64; 2] {
    let tr_half = (a + d) * 0.5;
    let disc = ((a - d) * 0.5).powi(2) + b * c;
    let s = disc.sqrt();
    [tr_half + s, tr_half - s]
}

fn hessenberg(a: &CMatrix) -> CMatrix {
    let n = a.rows();
    let mut h = a.clone();
    for k in 0..n.saturating_sub(2) {
        // Householder on column k below the subdiagonal.
        let mut x: Vec<C64> = (k + 1..n).map(|r| h[(r, k)]).collect();
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm < 1e-300 {
            continue;
        }
        let alpha = if x[0].norm() > 0.0 {
            -(x[0] / x[0].norm()) * xnorm
        } else {
            C64::new(-xnorm, 0.0)
        };
        x[0] -= alpha;
        let vnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm < 1e-300 {
            continue;
        }
        for v in &mut x {
            *v /= vnorm;
        }
        // H = I - 2 v v^H applied on the trailing rows and columns.
        for c in 0..n {
            let mut dot = zero();
            for (idx, r) in (k + 1..n).enumerate() {
                dot += x[idx].conj() * h[(r, c)];
            }
            for (idx, r) in (k + 1..n).enumerate() {
                let upd = 2.0 * x[idx] * dot;
                h[(r, c)] -= upd;
            }
        }
        for r in 0..n {
            let mut dot = zero();
            for (idx, c) in (k + 1..n).enumerate() {
                dot += h[(r, c)] * x[idx];
            }
            for (idx, c) in (k + 1..n).enumerate() {
                let upd = 2.0 * dot * x[idx].conj();
                h[(r, c)] -= upd;
            }
        }
    }
    h
}

fn qr_eigenvalues(h: &mut CMatrix) -> Vec<C64> {
    let n = h.rows();
    let mut vals = vec![zero(); n];
    let mut hi = n; // active block is rows 0..hi
    let mut sweeps_since_deflation = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        if hi == 1 {
            vals[0] = h[(0, 0)];
            break;
        }
        // deflation scan
        let mut lo = hi - 1;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if sub <= 1e-15 * diag.max(1e-300) {
                h[(lo, lo - 1)] = zero();
                break;
            }
            lo -= 1;
        }
        if lo == hi - 1 {
            vals[hi - 1] = h[(hi - 1, hi - 1)];
            hi -= 1;
            sweeps_since_deflation = 0;
            continue;
        }
        if hi >= 2 && lo == hi - 2 {
            let e = eig2(
                h[(hi - 2, hi - 2)],
                h[(hi - 2, hi - 1)],
                h[(hi - 1, hi - 2)],
                h[(hi - 1, hi - 1)],
            );
            vals[hi - 2] = e[0];
            vals[hi - 1] = e[1];
            hi -= 2;
            sweeps_since_deflation = 0;
            continue;
        }
        total += 1;
        sweeps_since_deflation += 1;
        if total > MAX_QR_SWEEPS * n {
            // Return the diagonal as the best available estimate; callers
            // operating on well-separated desk-scale spectra never get here.
            for k in 0..hi {
                vals[k] = h[(k, k)];
            }
            break;
        }
        // Wilkinson shift from the trailing 2x2 of the active block.
        let e = eig2(
            h[(hi - 2, hi - 2)],
            h[(hi - 2, hi - 1)],
            h[(hi - 1, hi - 2)],
            h[(hi - 1, hi - 1)],
        );
        let last = h[(hi - 1, hi - 1)];
        let mut shift = if (e[0] - last).norm() < (e[1] - last).norm() {
            e[0]
        } else {
            e[1]
        };
        if sweeps_since_deflation % 12 == 11 {
            // exceptional shift to break rare cycles
            shift = last + C64::new(1.5 * h[(hi - 1, hi - 2)].norm(), 0.0);
        }
        qr_step(h, lo, hi, shift);
    }
    vals
}

/// One explicit shifted QR sweep on the active Hessenberg block via Givens.
fn qr_step(h: &mut CMatrix, lo: usize, hi: usize, shift: C64) {
    let n = h.rows();
    for k in lo..hi {
        h[(k, k)] -= shift;
    }
    let mut rot: Vec<(f64, C64)> = Vec::with_capacity(hi - lo - 1);
    for k in lo..hi - 1 {
        let f = h[(k, k)];
        let g = h[(k + 1, k)];
        let (c, s, r) = givens(f, g);
        rot.push((c, s));
        h[(k, k)] = r;
        h[(k + 1, k)] = zero();
        for col in (k + 1)..n {
            let a = h[(k, col)];
            let b = h[(k + 1, col)];
            h[(k, col)] = c * a + s * b;
            h[(k + 1, col)] = -s.conj() * a + c * b;
        }
    }
    // multiply by the rotations on the right: H = R Q
    for (idx, k) in (lo..hi - 1).enumerate() {
        let (c, s) = rot[idx];
        for row in 0..(k + 2).min(n) {
            let a = h[(row, k)];
            let b = h[(row, k + 1)];
            h[(row, k)] = c * a + b * s.conj();
            h[(row, k + 1)] = -s * a + c * b;
        }
    }
    for k in lo..hi {
        h[(k, k)] += shift;
    }
}

fn givens(f: C64, g: C64) -> (f64, C64, C64) {
    if g.norm() == 0.0 {
        return (1.0, zero(), f);
    }
    if f.norm() == 0.0 {
        let phase = g.conj() / g.norm();
        return (0.0, phase, C64::new(g.norm(), 0.0));
    }
    let h = (f.norm_sqr() + g.norm_sqr()).sqrt();
    let c = f.norm() / h;
    let fs = f / f.norm();
    let s = fs * g.conj() / h;
    let r = fs * h;
    (c, s, r)
}

/// Group eigenvalues whose mutual distance is below `tol` (relative to the
/// overall scale). Returns (representative, multiplicity) pairs; the
/// representative is the cluster mean.
pub fn cluster_eigenvalues(vals: &[C64], tol: f64) -> Vec<(C64, usize)> {
    let scale = vals.iter().map(|v| v.norm()).fold(1e-300, f64::max).max(1.0);
    let mut clusters: Vec<(C64, usize)> = Vec::new();
    for &v in vals {
        if let Some(cl) = clusters
            .iter_mut()
            .find(|(m, _)| (*m - v).norm() <= tol * scale)
        {
            let k = cl.1 as f64;
            cl.0 = (cl.0 * k + v) / (k + 1.0);
            cl.1 += 1;
        } else {
            clusters.push((v, 1));
        }
    }
    clusters
}

/// Basis of the kernel of `m`, with rank decided at `tol` relative to the
/// largest entry. Returned as columns of a matrix (possibly zero columns).
pub fn kernel_basis(m: &CMatrix, tol: f64) -> CMatrix {
    let rows = m.rows();
    let cols = m.cols();
    let scale = m.max_norm().max(1e-300);
    let mut a = m.clone();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut r = 0usize;
    for c in 0..cols {
        // find pivot in column c at or below row r
        let mut p = r;
        let mut best = 0.0;
        for rr in r..rows {
            let v = a[(rr, c)].norm();
            if v > best {
                best = v;
                p = rr;
            }
        }
        if best <= tol * scale {
            continue;
        }
        if p != r {
            for cc in 0..cols {
                let tmp = a[(r, cc)];
                a[(r, cc)] = a[(p, cc)];
                a[(p, cc)] = tmp;
            }
        }
        let piv = a[(r, c)];
        for cc in 0..cols {
            a[(r, cc)] /= piv;
        }
        for rr in 0..rows {
            if rr != r {
                let f = a[(rr, c)];
                if f.norm() > 0.0 {
                    for cc in 0..cols {
                        let v = a[(r, cc)];
                        a[(rr, cc)] -= f * v;
                    }
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivot_cols.contains(c)).collect();
    let mut basis = CMatrix::zeros(cols, free.len());
    for (k, &fc) in free.iter().enumerate() {
        basis[(fc, k)] = one();
        for (pr, &pc) in pivot_cols.iter().enumerate() {
            basis[(pc, k)] = -a[(pr, fc)];
        }
    }
    basis
}

/// Spectral data of a square matrix: clustered eigenvalues with projectors
/// onto the associated generalized eigenspaces.
pub struct SpectralDecomposition {
    /// One entry per cluster: (eigenvalue, algebraic multiplicity, projector).
    pub clusters: Vec<(C64, usize, CMatrix)>,
}

impl SpectralDecomposition {
    pub fn total_dim(&self) -> usize {
        self.clusters.iter().map(|(_, m, _)| m).sum()
    }
}

/// Compute generalized eigenspaces and their projectors.
pub fn spectral_decomposition(a: &CMatrix, cluster_tol: f64) -> Result<SpectralDecomposition> {
    let n = a.rows();
    let vals = eigenvalues(a);
    let clusters = cluster_eigenvalues(&vals, cluster_tol);
    let scale = a.max_norm().max(1.0);
    // Basis of each generalized eigenspace: kernel of (A - lambda I)^mult.
    let mut bases: Vec<CMatrix> = Vec::new();
    for &(lam, mult) in &clusters {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] -= lam;
        }
        let powered = shifted.pow(mult as u32);
        // Kernel tolerance grows with the power of the scale.
        let ktol = 1e-10 * scale.powi(mult as i32 - 1).max(1.0);
        let basis = kernel_basis(&powered, ktol.min(1e-6));
        if basis.cols() != mult {
            return Err(Error::IllConditionedEigenproblem(format!(
                "generalized eigenspace of {lam} has numeric dimension {} but algebraic multiplicity {mult}",
                basis.cols()
            )));
        }
        bases.push(basis);
    }
    // Assemble V and invert once.
    let mut v = CMatrix::zeros(n, n);
    let mut col = 0usize;
    for b in &bases {
        for c in 0..b.cols() {
            for r in 0..n {
                v[(r, col)] = b[(r, c)];
            }
            col += 1;
        }
    }
    let vinv = v
        .inverse()
        .map_err(|_| Error::IllConditionedEigenproblem("eigenbasis is numerically singular".into()))?;
    let mut projectors = Vec::new();
    let mut offset = 0usize;
    for b in &bases {
        let m = b.cols();
        let mut sel = CMatrix::zeros(n, n);
        for k in offset..offset + m {
            sel[(k, k)] = one();
        }
        let p = &(&v * &sel) * &vinv;
        projectors.push(p);
        offset += m;
    }
    Ok(SpectralDecomposition {
        clusters: clusters
            .iter()
            .zip(projectors)
            .map(|(&(lam, m), p)| (lam, m, p))
            .collect(),
    })
}

/// Multiplicative Dunford decomposition `A = A_s A_u` with `A_s` semisimple,
/// `A_u` unipotent, both polynomials in `A` (hence commuting).
pub fn dunford(a: &CMatrix, cluster_tol: f64) -> Result<(CMatrix, CMatrix)> {
    let n = a.rows();
    let spec = spectral_decomposition(a, cluster_tol)?;
    let mut a_s = CMatrix::zeros(n, n);
    for (lam, _, p) in &spec.clusters {
        if lam.norm() < 1e-13 {
            return Err(Error::DunfordFailure("singular block in Dunford".into()));
        }
        a_s = &a_s + &p.scale(*lam);
    }
    let a_u = &a_s.inverse().map_err(|_| {
        Error::DunfordFailure("semisimple part not invertible".into())
    })? * a;
    // sanity: A_u - I nilpotent
    let mut nil = a_u.clone();
    for i in 0..n {
        nil[(i, i)] -= one();
    }
    let check = nil.pow(n as u32);
    if check.max_norm() > 1e-8 * a.max_norm().max(1.0) {
        return Err(Error::DunfordFailure(format!(
            "unipotent part fails nilpotency check: {:.3e}",
            check.max_norm()
        )));
    }
    Ok((a_s, a_u))
}

/// Eigenvector basis (proper eigenvectors) per cluster: kernel of A - lambda.
pub fn eigenvector_basis(a: &CMatrix, lam: C64) -> CMatrix {
    let n = a.rows();
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= lam;
    }
    kernel_basis(&shifted, 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eig_diag_and_jordan() {
        let a = CMatrix::diag(&[c(1.0, 0.0), c(2.0, 1.0), c(-0.5, 0.3)]);
        let mut vals = eigenvalues(&a);
        vals.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert!((vals[0] - c(-0.5, 0.3)).norm() < 1e-12);
        assert!((vals[1] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((vals[2] - c(2.0, 1.0)).norm() < 1e-12);

        let j = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]);
        let vals = eigenvalues(&j);
        for v in vals {
            assert!((v - c(1.0, 0.0)).norm() < 1e-7);
        }
    }

    #[test]
    fn eig_general_matches_characteristic() {
        // Companion matrix of z^4 - (2+i) z^3 + 0.5 z - 3.
        let a = CMatrix::from_rows(&[
            vec![c(2.0, 1.0), c(0.0, 0.0), c(-0.5, 0.0), c(3.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        ]);
        let vals = eigenvalues(&a);
        for v in vals {
            let p = v.powi(4) - c(2.0, 1.0) * v.powi(3) + c(0.5, 0.0) * v - c(3.0, 0.0);
            assert!(p.norm() < 1e-8, "characteristic residual {}", p.norm());
        }
    }

    #[test]
    fn projectors_resolve_identity() {
        let a = CMatrix::from_rows(&[
            vec![c(2.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 1.0)],
        ]);
        let spec = spectral_decomposition(&a, 1e-8).unwrap();
        assert_eq!(spec.clusters.len(), 2);
        let mut sum = CMatrix::zeros(3, 3);
        for (_, _, p) in &spec.clusters {
            sum = &sum + p;
            // idempotent
            assert!((&(p * p) - p).norm() < 1e-10);
        }
        assert!((&sum - &CMatrix::identity(3)).norm() < 1e-10);
    }

    #[test]
    fn dunford_jordan_block() {
        let j = CMatrix::from_rows(&[
            vec![c(2.0, 0.0), c(1.0, 0.0)],
            vec![c(0.0, 0.0), c(2.0, 0.0)],
        ]);
        let (s, u) = dunford(&j, 1e-8).unwrap();
        assert!((&s - &CMatrix::diag(&[c(2.0, 0.0), c(2.0, 0.0)])).norm() < 1e-9);
        assert!((u[(0, 1)] - c(0.5, 0.0)).norm() < 1e-9);
        assert!((&(&s * &u) - &j).norm() < 1e-9);
    }

    #[test]
    fn kernel_of_rank_one() {
        let m = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(4.0, 0.0)]]);
        let k = kernel_basis(&m, 1e-10);
        assert_eq!(k.cols(), 1);
        let img = m.mat_vec(&k.column(0));
        assert!(img.iter().all(|z| z.norm() < 1e-10));
    }
}
