//! Human-editable JSON encoding of systems in standard form, alien-target
//! files and machine-readable reports.
//!
//! Complex numbers are two-element arrays `[re, im]`. Matrices are nested
//! arrays of complex numbers, row-major. Off-diagonal blocks are keyed by
//! `"i,j"` with 1-based block indices and map degree strings to matrices.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::c64_pair;
use crate::error::{Error, Result};
use crate::matrix::{C64, CMatrix};
use crate::qsystem::{EllipticPoint, QSystem};
use crate::series::TruncatedLaurentSeries;
use crate::structure::BlockStructure;

type JsonMatrix = Vec<Vec<[f64; 2]>>;

fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn matrix_from_json(j: &JsonMatrix) -> Result<CMatrix> {
    let rows = j.len();
    if rows == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    let cols = j[0].len();
    if cols == 0 || j.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("ragged or empty matrix rows".into()));
    }
    let mut m = CMatrix::zeros(rows, cols);
    for (r, row) in j.iter().enumerate() {
        for (c, &[re, im]) in row.iter().enumerate() {
            m[(r, c)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockSpec {
    pub slope: i64,
    pub matrix: JsonMatrix,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_polynomial: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_normalized: Option<bool>,
}

/// On-disk encoding of a system in standard form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemSpecFile {
    #[serde(with = "c64_pair")]
    pub q: C64,
    pub blocks: Vec<BlockSpec>,
    /// `"i,j"` (1-based) -> degree string -> matrix
    #[serde(default)]
    pub offdiag: BTreeMap<String, BTreeMap<String, JsonMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

impl SystemSpecFile {
    pub fn from_system(sys: &QSystem, name: Option<&str>) -> Self {
        let blocks = sys
            .structure
            .slopes
            .iter()
            .zip(&sys.diag)
            .map(|(&slope, m)| BlockSpec {
                slope,
                matrix: matrix_to_json(m),
            })
            .collect();
        let mut offdiag = BTreeMap::new();
        for (&(i, j), u) in &sys.offdiag {
            let mut degrees = BTreeMap::new();
            for d in u.n_min()..=u.n_max() {
                let m = u.coeff(d).unwrap();
                if m.max_norm() > 0.0 {
                    degrees.insert(d.to_string(), matrix_to_json(m));
                }
            }
            if !degrees.is_empty() {
                offdiag.insert(format!("{},{}", i + 1, j + 1), degrees);
            }
        }
        SystemSpecFile {
            q: sys.q,
            blocks,
            offdiag,
            metadata: name.map(|n| Metadata {
                name: Some(n.to_string()),
                ..Metadata::default()
            }),
        }
    }

    pub fn to_system(&self) -> Result<QSystem> {
        let slopes: Vec<i64> = self.blocks.iter().map(|b| b.slope).collect();
        let diag: Vec<CMatrix> = self
            .blocks
            .iter()
            .map(|b| matrix_from_json(&b.matrix))
            .collect::<Result<_>>()?;
        let ranks: Vec<usize> = diag.iter().map(|m| m.rows()).collect();
        let structure = BlockStructure::new(slopes, ranks)?;
        let mut offdiag = BTreeMap::new();
        for (key, degrees) in &self.offdiag {
            let (i, j) = parse_block_key(key)?;
            if i >= j || j > structure.block_count() {
                return Err(Error::Parse(format!("bad off-diagonal key '{key}'")));
            }
            let (i, j) = (i - 1, j - 1);
            let mut terms: Vec<(i64, CMatrix)> = Vec::new();
            for (dstr, m) in degrees {
                let d: i64 = dstr
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad degree '{dstr}'")))?;
                terms.push((d, matrix_from_json(m)?));
            }
            let lo = terms.iter().map(|t| t.0).min().unwrap();
            let hi = terms.iter().map(|t| t.0).max().unwrap();
            let mut series =
                TruncatedLaurentSeries::zeros(lo, hi, structure.ranks[i], structure.ranks[j]);
            for (d, m) in terms {
                if (m.rows(), m.cols()) != (structure.ranks[i], structure.ranks[j]) {
                    return Err(Error::Parse(format!(
                        "block {key} degree {d} has wrong shape"
                    )));
                }
                series.set_coeff(d, m);
            }
            offdiag.insert((i, j), series);
        }
        QSystem::new(self.q, structure, diag, offdiag)
    }

    pub fn load(path: &Path) -> Result<QSystem> {
        let text = std::fs::read_to_string(path)?;
        let file: SystemSpecFile =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        file.to_system()
    }

    pub fn save(sys: &QSystem, name: Option<&str>, path: &Path) -> Result<()> {
        let file = SystemSpecFile::from_system(sys, name);
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

fn parse_block_key(key: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = key.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Parse(format!("off-diagonal key '{key}' is not 'i,j'")));
    }
    let i = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad block index '{}'", parts[0])))?;
    let j = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad block index '{}'", parts[1])))?;
    Ok((i, j))
}

// ---------------------------------------------------------------------------
// Alien target files
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetEntry {
    pub delta: i64,
    #[serde(with = "c64_pair")]
    pub direction: C64,
    pub matrix: JsonMatrix,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetFile {
    pub targets: Vec<TargetEntry>,
}

impl TargetFile {
    pub fn from_targets(t: &crate::reconstruction::AlienTarget) -> Self {
        TargetFile {
            targets: t
                .entries
                .iter()
                .map(|(delta, dir, m)| TargetEntry {
                    delta: *delta,
                    direction: dir.rep(),
                    matrix: matrix_to_json(m),
                })
                .collect(),
        }
    }

    pub fn to_targets(&self, q: C64) -> Result<crate::reconstruction::AlienTarget> {
        let entries = self
            .targets
            .iter()
            .map(|e| {
                Ok((
                    e.delta,
                    EllipticPoint::new(e.direction, q)?,
                    matrix_from_json(&e.matrix)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(crate::reconstruction::AlienTarget { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::one;

    fn estar() -> QSystem {
        let structure = BlockStructure::new(vec![0, 1], vec![1, 1]).unwrap();
        let mut off = BTreeMap::new();
        off.insert((0, 1), TruncatedLaurentSeries::scalar_poly(&[(0, one())]));
        QSystem::new(
            Complex64::new(2.0, 0.0),
            structure,
            vec![CMatrix::scalar(one()), CMatrix::scalar(one())],
            off,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_bitwise() {
        let sys = estar();
        let file = SystemSpecFile::from_system(&sys, Some("estar"));
        let text = serde_json::to_string(&file).unwrap();
        let back: SystemSpecFile = serde_json::from_str(&text).unwrap();
        let sys2 = back.to_system().unwrap();
        assert_eq!(sys.q, sys2.q);
        assert_eq!(sys.structure, sys2.structure);
        for (a, b) in sys.diag.iter().zip(&sys2.diag) {
            for r in 0..a.rows() {
                for c in 0..a.cols() {
                    assert!(a[(r, c)] == b[(r, c)], "diag coefficients must round-trip bitwise");
                }
            }
        }
        let (ua, ub) = (&sys.offdiag[&(0, 1)], &sys2.offdiag[&(0, 1)]);
        assert!(ua.coeff_or_zero(0)[(0, 0)] == ub.coeff_or_zero(0)[(0, 0)]);
    }

    #[test]
    fn irrational_coefficients_round_trip() {
        let structure = BlockStructure::new(vec![0], vec![1]).unwrap();
        let v = Complex64::new(std::f64::consts::PI, 1.0 / 3.0);
        let sys = QSystem::new(
            Complex64::new(2.0, 0.0),
            structure,
            vec![CMatrix::scalar(v)],
            BTreeMap::new(),
        )
        .unwrap();
        let file = SystemSpecFile::from_system(&sys, None);
        let text = serde_json::to_string(&file).unwrap();
        let back: SystemSpecFile = serde_json::from_str(&text).unwrap();
        let sys2 = back.to_system().unwrap();
        assert!(sys.diag[0][(0, 0)] == sys2.diag[0][(0, 0)]);
    }

    #[test]
    fn parse_errors_are_reported() {
        let bad = r#"{"q": [2.0, 0.0], "blocks": [{"slope": 0, "matrix": []}]}"#;
        let file: SystemSpecFile = serde_json::from_str(bad).unwrap();
        assert!(matches!(file.to_system(), Err(Error::Parse(_))));
        let bad_key = r#"{
            "q": [2.0, 0.0],
            "blocks": [{"slope": 0, "matrix": [[[1.0, 0.0]]]}],
            "offdiag": {"2,1": {"0": [[[1.0, 0.0]]]}}
        }"#;
        let file: SystemSpecFile = serde_json::from_str(bad_key).unwrap();
        assert!(file.to_system().is_err());
    }
}
