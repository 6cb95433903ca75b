//! Placement of the `N = n²` coefficients onto `n` memory banks of depth `n`.
//!
//! The shifted layout stores coefficient `i` at row `i / n` and rotates every
//! row one bank to the right of the row above it:
//!
//! ```text
//! (address, bank) = (i / n, (i mod n + i / n) mod n)
//! ```
//!
//! With this rotation `i` and `i ± 2^t` never share a bank, so both operands
//! of any radix-2 butterfly can be fetched in the same cycle. The plain
//! sequential layout (`bank = i mod n`) is kept for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical location of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub address: usize,
    pub bank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    #[default]
    Shifted,
    Sequential,
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted" => Ok(LayoutKind::Shifted),
            "sequential" => Ok(LayoutKind::Sequential),
            other => Err(Error::Parse(format!(
                "unknown layout `{other}` (expected `shifted` or `sequential`)"
            ))),
        }
    }
}

impl std::fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LayoutKind::Shifted => "shifted",
            LayoutKind::Sequential => "sequential",
        })
    }
}

/// Bank geometry for one polynomial degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutMap {
    degree: usize,
    width: usize,
    kind: LayoutKind,
}

impl LayoutMap {
    /// Accepts `N = 4^j` with `N >= 16`, so that `n = sqrt(N) > 2`.
    pub fn new(degree: usize) -> Result<Self> {
        Self::with_kind(degree, LayoutKind::Shifted)
    }

    pub fn with_kind(degree: usize, kind: LayoutKind) -> Result<Self> {
        if !degree.is_power_of_two() || degree.trailing_zeros() % 2 != 0 || degree < 16 {
            return Err(Error::UnsupportedLayoutDegree(degree));
        }
        Ok(LayoutMap {
            degree,
            width: 1 << (degree.trailing_zeros() / 2),
            kind,
        })
    }

    /// `N`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `n = sqrt(N)`: bank count, bank depth and row width.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn place(&self, i: usize) -> Result<Cell> {
        if i >= self.degree {
            return Err(Error::IndexOutOfRange {
                index: i,
                limit: self.degree,
            });
        }
        Ok(self.cell(i))
    }

    pub fn coefficient_at(&self, cell: Cell) -> Result<usize> {
        let n = self.width;
        if cell.address >= n || cell.bank >= n {
            return Err(Error::IndexOutOfRange {
                index: cell.address.max(cell.bank),
                limit: n,
            });
        }
        Ok(self.index(cell))
    }

    #[inline]
    pub(crate) fn cell(&self, i: usize) -> Cell {
        let n = self.width;
        let (address, column) = (i / n, i % n);
        let bank = match self.kind {
            LayoutKind::Shifted => (column + address) % n,
            LayoutKind::Sequential => column,
        };
        Cell { address, bank }
    }

    #[inline]
    pub(crate) fn index(&self, cell: Cell) -> usize {
        let n = self.width;
        let column = match self.kind {
            LayoutKind::Shifted => (cell.bank + n - cell.address) % n,
            LayoutKind::Sequential => cell.bank,
        };
        cell.address * n + column
    }
}

/// Location of coefficient `i` in the shifted layout with `n` banks.
pub fn place(i: usize, n: usize) -> Result<Cell> {
    LayoutMap::new(n * n)?.place(i)
}

/// Inverse of [`place`].
pub fn coefficient_at(address: usize, bank: usize, n: usize) -> Result<usize> {
    LayoutMap::new(n * n)?.coefficient_at(Cell { address, bank })
}

/// Two coefficients at a power-of-two distance that share a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub partner: usize,
    pub bank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub degree: usize,
    pub layout: LayoutKind,
    pub pairs_checked: u64,
    pub violations: Vec<Violation>,
}

impl ConflictReport {
    pub fn is_conflict_free(&self) -> bool {
        self.violations.is_empty()
    }

    /// A summary object on the first line, then one object per violation.
    pub fn to_json_lines(&self) -> String {
        let summary = serde_json::json!({
            "degree": self.degree,
            "layout": self.layout,
            "pairs_checked": self.pairs_checked,
            "violations": self.violations.len(),
        });
        let mut out = format!("{summary}\n");
        for v in &self.violations {
            out.push_str(&serde_json::to_string(v).expect("violation serializes"));
            out.push('\n');
        }
        out
    }
}

/// Checks `bank(i) != bank(i ± 2^t)` for every `i` and every `0 <= t < log2 N`
/// whose partner lies in `[0, N)`.
pub fn verify_conflict_free(layout: &LayoutMap) -> ConflictReport {
    let degree = layout.degree();
    let mut pairs_checked = 0;
    let mut violations = Vec::new();
    for i in 0..degree {
        let bank = layout.cell(i).bank;
        for t in 0..degree.trailing_zeros() {
            let step = 1usize << t;
            let partners = [i.checked_add(step).filter(|&p| p < degree), i.checked_sub(step)];
            for partner in partners.into_iter().flatten() {
                pairs_checked += 1;
                if layout.cell(partner).bank == bank {
                    violations.push(Violation {
                        index: i,
                        partner,
                        bank,
                    });
                }
            }
        }
    }
    ConflictReport {
        degree,
        layout: layout.kind(),
        pairs_checked,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn placement_examples() {
        assert_eq!(place(0, 4), Ok(Cell { address: 0, bank: 0 }));
        assert_eq!(place(8, 4), Ok(Cell { address: 2, bank: 2 }));
        let seq = LayoutMap::with_kind(16, LayoutKind::Sequential).unwrap();
        assert_eq!(seq.place(0).unwrap().bank, seq.place(8).unwrap().bank);
        assert_eq!(coefficient_at(0, 0, 4), Ok(0));
        assert_eq!(coefficient_at(2, 2, 4), Ok(8));
    }

    #[test]
    fn inverse_by_enumeration() {
        // find (2,2) by scanning every index
        let found = (0..16).find(|&i| place(i, 4).unwrap() == Cell { address: 2, bank: 2 });
        assert_eq!(found, Some(8));
    }

    #[test]
    fn rejects_bad_degrees_and_indices() {
        for n in [0, 4, 8, 32, 48, 2048] {
            assert_eq!(LayoutMap::new(n), Err(Error::UnsupportedLayoutDegree(n)));
        }
        assert!(place(16, 4).is_err());
        assert!(coefficient_at(4, 0, 4).is_err());
        assert!(coefficient_at(0, 4, 4).is_err());
    }

    #[test]
    fn bijective_on_every_cell() {
        for kind in [LayoutKind::Shifted, LayoutKind::Sequential] {
            for n in [4usize, 8, 16, 32] {
                let map = LayoutMap::with_kind(n * n, kind).unwrap();
                let mut seen = HashSet::new();
                for i in 0..n * n {
                    let cell = map.place(i).unwrap();
                    assert!(seen.insert(cell));
                    assert_eq!(map.coefficient_at(cell).unwrap(), i);
                }
                for address in 0..n {
                    for bank in 0..n {
                        let cell = Cell { address, bank };
                        assert_eq!(map.place(map.coefficient_at(cell).unwrap()).unwrap(), cell);
                    }
                }
            }
        }
    }

    #[test]
    fn bijective_n256_by_enumeration() {
        let map = LayoutMap::new(256).unwrap();
        let mut grid = vec![vec![None; 16]; 16];
        for i in 0..256 {
            let c = map.place(i).unwrap();
            assert!(grid[c.address][c.bank].is_none());
            grid[c.address][c.bank] = Some(i);
        }
        assert!(grid.iter().flatten().all(Option::is_some));
    }

    #[test]
    fn shifted_layout_is_conflict_free() {
        for degree in [16usize, 64, 256, 1024] {
            let report = verify_conflict_free(&LayoutMap::new(degree).unwrap());
            assert!(report.is_conflict_free(), "N = {degree}");
            assert!(report.pairs_checked > 0);
        }
    }

    #[test]
    fn sequential_layout_collides() {
        let report =
            verify_conflict_free(&LayoutMap::with_kind(16, LayoutKind::Sequential).unwrap());
        assert!(!report.is_conflict_free());
        assert!(report.violations.contains(&Violation {
            index: 0,
            partner: 8,
            bank: 0
        }));
        let lines = report.to_json_lines();
        assert_eq!(lines.lines().count(), 1 + report.violations.len());
        let head: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert_eq!(head["layout"], "sequential");
    }
}
