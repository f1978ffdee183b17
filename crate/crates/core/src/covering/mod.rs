//! Strength-t covering arrays over boolean rule parameters.

mod acts;
mod ipog;
mod verify;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{read_json, write_json, Guide, RuleId, RuleTuple};

pub use acts::{export_acts_input, import_acts_export, parse_acts_export};
pub use ipog::{estimate_memory_bytes, generate_ipog, generate_ipog_with, IpogOptions};
pub use verify::{verify_coverage, CoverageReport, MissingCombination, VerifyMode};

/// Interaction strength `t`, limited to `2..=6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Strength(usize);

impl Strength {
    pub const MIN: usize = 2;
    pub const MAX: usize = 6;

    pub fn new(t: usize) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&t) {
            Ok(Strength(t))
        } else {
            Err(Error::InvalidStrength(t))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for Strength {
    type Error = Error;

    fn try_from(t: usize) -> Result<Self> {
        Strength::new(t)
    }
}

impl From<Strength> for usize {
    fn from(s: Strength) -> usize {
        s.0
    }
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A boolean selection matrix: one row per tuple, one column per guide rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ArrayFile")]
pub struct CoveringArray {
    guide_id: String,
    strength: Strength,
    algorithm_tag: String,
    columns: Vec<RuleId>,
    rows: Vec<Vec<bool>>,
}

#[derive(Deserialize)]
struct ArrayFile {
    guide_id: String,
    strength: Strength,
    algorithm_tag: String,
    columns: Vec<RuleId>,
    rows: Vec<Vec<bool>>,
}

impl TryFrom<ArrayFile> for CoveringArray {
    type Error = Error;

    fn try_from(f: ArrayFile) -> Result<Self> {
        CoveringArray::new(f.guide_id, f.strength, f.algorithm_tag, f.columns, f.rows)
    }
}

impl CoveringArray {
    /// Validates row arity and rejects duplicate rows or columns.
    pub fn new(
        guide_id: impl Into<String>,
        strength: Strength,
        algorithm_tag: impl Into<String>,
        columns: Vec<RuleId>,
        rows: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let mut seen_cols = std::collections::HashSet::new();
        for c in &columns {
            if !seen_cols.insert(c) {
                return Err(Error::DuplicateRule(c.clone()));
            }
        }
        let mut seen_rows = std::collections::HashSet::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Validation(format!(
                    "row {i} has {} cells but the array has {} columns",
                    row.len(),
                    columns.len()
                )));
            }
            if !seen_rows.insert(row) {
                return Err(Error::Validation(format!("row {i} duplicates an earlier row")));
            }
        }
        Ok(CoveringArray {
            guide_id: guide_id.into(),
            strength,
            algorithm_tag: algorithm_tag.into(),
            columns,
            rows,
        })
    }

    /// Like [`CoveringArray::new`] but silently drops repeated rows, keeping
    /// the first occurrence.
    pub fn new_dedup(
        guide_id: impl Into<String>,
        strength: Strength,
        algorithm_tag: impl Into<String>,
        columns: Vec<RuleId>,
        rows: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let rows: Vec<Vec<bool>> = rows.into_iter().filter(|r| seen.insert(r.clone())).collect();
        CoveringArray::new(guide_id, strength, algorithm_tag, columns, rows)
    }

    pub fn guide_id(&self) -> &str {
        &self.guide_id
    }

    pub fn strength(&self) -> Strength {
        self.strength
    }

    pub fn algorithm_tag(&self) -> &str {
        &self.algorithm_tag
    }

    pub fn columns(&self) -> &[RuleId] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Rows as rule tuples, indexed by row position.
    pub fn tuples(&self) -> impl Iterator<Item = RuleTuple> + '_ {
        self.rows.iter().enumerate().map(|(index, row)| RuleTuple {
            index,
            selection: row.clone(),
        })
    }

    /// Checks that the array's columns are exactly the guide's rules, in order.
    pub fn check_matches(&self, guide: &Guide) -> Result<()> {
        if self.columns.as_slice() != guide.rules() {
            return Err(Error::Validation(format!(
                "array columns do not match the rules of guide {:?}",
                guide.id()
            )));
        }
        Ok(())
    }
}

pub fn load_array(path: &Path) -> Result<CoveringArray> {
    read_json(path)
}

pub fn save_array(path: &Path, array: &CoveringArray) -> Result<()> {
    write_json(path, array)
}
