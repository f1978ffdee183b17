//! Coverage verification, independent of how an array was produced.
//!
//! Each column becomes a bit set over rows; a value combination on a column
//! subset is present iff the AND of the matching column sets (or their
//! complements) is non-empty.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::CoveringArray;
use crate::model::RuleId;

/// At most this many missing combinations are listed in a report.
pub const MAX_REPORTED: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    Exhaustive,
    Sampled { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingCombination {
    pub columns: Vec<RuleId>,
    pub values: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub covered: bool,
    pub strength: usize,
    pub subsets_checked: u64,
    pub missing_total: u64,
    /// The first [`MAX_REPORTED`] missing combinations.
    pub missing: Vec<MissingCombination>,
}

struct ColumnSets {
    words: usize,
    /// Bit set of rows where the column is true, per column.
    ones: Vec<Vec<u64>>,
    /// Mask of valid row bits.
    all: Vec<u64>,
}

impl ColumnSets {
    fn new(array: &CoveringArray) -> Self {
        let n_rows = array.num_rows();
        let words = n_rows.div_ceil(64).max(1);
        let mut ones = vec![vec![0u64; words]; array.columns().len()];
        for (r, row) in array.rows().iter().enumerate() {
            for (c, &cell) in row.iter().enumerate() {
                if cell {
                    ones[c][r / 64] |= 1 << (r % 64);
                }
            }
        }
        let mut all = vec![0u64; words];
        for r in 0..n_rows {
            all[r / 64] |= 1 << (r % 64);
        }
        ColumnSets { words, ones, all }
    }

    /// Appends the masks of `parent` split on column `col`: for every
    /// existing pattern p, patterns 2p (col false) and 2p+1 (col true).
    fn refine(&self, parent: &[u64], col: usize) -> Vec<u64> {
        let w = self.words;
        let mut out = vec![0u64; parent.len() * 2];
        for (p, mask) in parent.chunks_exact(w).enumerate() {
            for i in 0..w {
                let one = self.ones[col][i];
                out[(2 * p) * w + i] = mask[i] & !one;
                out[(2 * p + 1) * w + i] = mask[i] & one;
            }
        }
        out
    }

    /// Patterns (as t-bit codes, first column most significant) with no row.
    fn empty_patterns(&self, cols: &[usize]) -> Vec<usize> {
        let mut masks = self.all.clone();
        for &c in cols {
            masks = self.refine(&masks, c);
        }
        masks
            .chunks_exact(self.words)
            .enumerate()
            .filter(|(_, m)| m.iter().all(|&x| x == 0))
            .map(|(p, _)| p)
            .collect()
    }
}

#[derive(Default)]
struct Tally {
    subsets: u64,
    missing_total: u64,
    missing: Vec<(Vec<usize>, usize)>,
}

impl Tally {
    fn record(&mut self, cols: &[usize], patterns: Vec<usize>) {
        self.subsets += 1;
        self.missing_total += patterns.len() as u64;
        for p in patterns {
            if self.missing.len() < MAX_REPORTED {
                self.missing.push((cols.to_vec(), p));
            }
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.subsets += other.subsets;
        self.missing_total += other.missing_total;
        let room = MAX_REPORTED - self.missing.len();
        self.missing.extend(other.missing.into_iter().take(room));
        self
    }
}

/// Recursively visits every t-subset extending `cols`, sharing partial masks.
/// The last column is checked in place, without materialising the split.
fn walk(sets: &ColumnSets, n: usize, t: usize, cols: &mut Vec<usize>, masks: &[u64], tally: &mut Tally) {
    let w = sets.words;
    let start = cols.last().map_or(0, |&c| c + 1);
    if cols.len() + 1 == t {
        for c in start..n {
            let one = &sets.ones[c];
            let mut empty = Vec::new();
            for (p, mask) in masks.chunks_exact(w).enumerate() {
                let (mut f, mut tr) = (0u64, 0u64);
                for i in 0..w {
                    f |= mask[i] & !one[i];
                    tr |= mask[i] & one[i];
                }
                if f == 0 {
                    empty.push(2 * p);
                }
                if tr == 0 {
                    empty.push(2 * p + 1);
                }
            }
            cols.push(c);
            tally.record(cols, empty);
            cols.pop();
        }
        return;
    }
    let remaining = t - cols.len();
    for c in start..=n - remaining {
        let refined = sets.refine(masks, c);
        cols.push(c);
        walk(sets, n, t, cols, &refined, tally);
        cols.pop();
    }
}

pub fn verify_coverage(array: &CoveringArray, mode: VerifyMode) -> CoverageReport {
    let t = array.strength().get();
    let n = array.columns().len();
    let sets = ColumnSets::new(array);

    let tally = if n < t {
        Tally::default()
    } else {
        match mode {
            VerifyMode::Exhaustive => (0..=n - t)
                .into_par_iter()
                .map(|first| {
                    let mut tally = Tally::default();
                    let masks = sets.refine(&sets.all, first);
                    walk(&sets, n, t, &mut vec![first], &masks, &mut tally);
                    tally
                })
                .collect::<Vec<_>>()
                .into_iter()
                .fold(Tally::default(), Tally::merge),
            VerifyMode::Sampled { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut tally = Tally::default();
                for _ in 0..samples {
                    let mut cols = rand::seq::index::sample(&mut rng, n, t).into_vec();
                    cols.sort_unstable();
                    let empty = sets.empty_patterns(&cols);
                    tally.record(&cols, empty);
                }
                tally
            }
        }
    };

    let missing = tally
        .missing
        .into_iter()
        .map(|(cols, pattern)| MissingCombination {
            values: (0..cols.len())
                .map(|k| pattern >> (cols.len() - 1 - k) & 1 == 1)
                .collect(),
            columns: cols.iter().map(|&c| array.columns()[c].clone()).collect(),
        })
        .collect();
    CoverageReport {
        covered: tally.missing_total == 0,
        strength: t,
        subsets_checked: tally.subsets,
        missing_total: tally.missing_total,
        missing,
    }
}
