//! Slope-block layout shared by systems, gauges and Lie-algebra elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Newton-polygon data: strictly increasing integer slopes with ranks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub slopes: Vec<i64>,
    pub ranks: Vec<usize>,
}

impl BlockStructure {
    pub fn new(slopes: Vec<i64>, ranks: Vec<usize>) -> Result<Self> {
        if slopes.len() != ranks.len() || slopes.is_empty() {
            return Err(Error::InvalidSystem(
                "slopes and ranks must be non-empty and of equal length".into(),
            ));
        }
        if slopes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSystem("slopes must be strictly increasing".into()));
        }
        if ranks.iter().any(|&r| r == 0) {
            return Err(Error::InvalidSystem("ranks must be positive".into()));
        }
        Ok(BlockStructure { slopes, ranks })
    }

    /// Number of slope blocks.
    pub fn block_count(&self) -> usize {
        self.slopes.len()
    }

    /// Total matrix size.
    pub fn size(&self) -> usize {
        self.ranks.iter().sum()
    }

    /// Row/column offset of block `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.ranks[..i].iter().sum()
    }

    /// Slope difference `mu_j - mu_i`, the level of the `(i, j)` block.
    pub fn level(&self, i: usize, j: usize) -> i64 {
        self.slopes[j] - self.slopes[i]
    }

    /// All strictly upper pairs `(i, j)` in increasing-level order, ties in
    /// lexicographic order. This is the dependency-safe computation order of
    /// the gauge recursions.
    pub fn pairs_by_level(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = (0..self.block_count())
            .flat_map(|i| ((i + 1)..self.block_count()).map(move |j| (i, j)))
            .collect();
        pairs.sort_by_key(|&(i, j)| (self.level(i, j), i, j));
        pairs
    }

    /// Distinct levels realized by slope pairs, ascending.
    pub fn levels(&self) -> Vec<i64> {
        let mut l: Vec<i64> = self
            .pairs_by_level()
            .iter()
            .map(|&(i, j)| self.level(i, j))
            .collect();
        l.dedup();
        let mut seen = Vec::new();
        for v in l {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen
    }

    /// Smallest realized level, if any pair exists.
    pub fn min_level(&self) -> Option<i64> {
        self.levels().into_iter().min()
    }

    /// Block index containing the flat row/column `idx`.
    pub fn block_of(&self, idx: usize) -> usize {
        let mut acc = 0;
        for (b, &r) in self.ranks.iter().enumerate() {
            acc += r;
            if idx < acc {
                return b;
            }
        }
        panic!("index {idx} out of range");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_levels() {
        let s = BlockStructure::new(vec![0, 1, 2], vec![1, 2, 1]).unwrap();
        assert_eq!(s.size(), 4);
        assert_eq!(s.offset(2), 3);
        assert_eq!(s.pairs_by_level(), vec![(0, 1), (1, 2), (0, 2)]);
        assert_eq!(s.levels(), vec![1, 2]);
        assert_eq!(s.block_of(2), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(BlockStructure::new(vec![1, 1], vec![1, 1]).is_err());
        assert!(BlockStructure::new(vec![0], vec![0]).is_err());
        assert!(BlockStructure::new(vec![], vec![]).is_err());
    }
}
