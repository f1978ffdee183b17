//! In-parameter-order (IPOG) generation for boolean parameters.
//!
//! The array starts as the full factorial over the first `t` columns and then
//! grows one column at a time. Horizontal extension assigns the new column's
//! value row by row, picking the value that covers the most still-uncovered
//! t-tuples; vertical extension then adds or completes rows for whatever is
//! left.
//!
//! Uncovered tuples for the new column `c` are kept as bit planes. A tuple is
//! `(prefix, d, pattern, v)`: a (t-2)-subset `prefix` of earlier columns, one
//! more earlier column `d` above the prefix, a value pattern over
//! `prefix ∪ {d}`, and the value `v` of column `c`. For each prefix and each
//! `(pattern, v)` there is one bit vector indexed by `d`, so a row is scored
//! against 64 tuples per word operation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CoveringArray, Strength};
use crate::error::{Error, Result};
use crate::model::Guide;

/// Strengths above this need `force` on guides larger than [`FORCE_RULES`].
const FORCE_STRENGTH: usize = 4;
const FORCE_RULES: usize = 100;

#[derive(Debug, Clone, Copy, Default)]
pub struct IpogOptions {
    pub seed: u64,
    /// Allow strengths above 4 on guides with more than 100 rules.
    pub force: bool,
}

pub fn generate_ipog(guide: &Guide, strength: Strength, seed: u64) -> Result<CoveringArray> {
    generate_ipog_with(guide, strength, IpogOptions { seed, force: false })
}

/// Upper bound on the uncovered-tuple planes when extending to the last column.
pub fn estimate_memory_bytes(rules: usize, strength: Strength) -> u64 {
    let t = strength.get();
    if rules <= t {
        return 0;
    }
    let last = rules - 1;
    let prefixes = binomial(last.saturating_sub(1) as u64, (t - 2) as u64);
    let words = last.div_ceil(64) as u64;
    prefixes
        .saturating_mul(1 << t)
        .saturating_mul(words)
        .saturating_mul(8)
}

pub fn generate_ipog_with(
    guide: &Guide,
    strength: Strength,
    opts: IpogOptions,
) -> Result<CoveringArray> {
    let t = strength.get();
    let n = guide.len();
    if t > n {
        return Err(Error::StrengthExceedsRules { strength: t, rules: n });
    }
    if t > FORCE_STRENGTH && n > FORCE_RULES && !opts.force {
        return Err(Error::ResourceBound {
            strength: t,
            rules: n,
            estimate_mib: estimate_memory_bytes(n, strength) >> 20,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = initial_block(t, n);
    for c in t..n {
        extend_column(&mut rows, c, t, &mut rng);
        if c % 64 == 0 {
            tracing::debug!(column = c, rows = rows.len(), "ipog progress");
        }
    }

    let rows: Vec<Vec<bool>> = rows.iter().map(|r| r.finalize(n)).collect();
    CoveringArray::new_dedup(
        guide.id(),
        strength,
        "ipog",
        guide.rules().to_vec(),
        rows,
    )
}

/// A row under construction. Cells whose `defined` bit is clear are
/// don't-cares.
#[derive(Debug, Clone)]
struct PartialRow {
    value: Vec<u64>,
    defined: Vec<u64>,
}

impl PartialRow {
    fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        PartialRow {
            value: vec![0; words],
            defined: vec![0; words],
        }
    }

    #[inline]
    fn is_defined(&self, col: usize) -> bool {
        self.defined[col / 64] >> (col % 64) & 1 == 1
    }

    #[inline]
    fn get(&self, col: usize) -> bool {
        self.value[col / 64] >> (col % 64) & 1 == 1
    }

    #[inline]
    fn set(&mut self, col: usize, v: bool) {
        let bit = 1u64 << (col % 64);
        self.defined[col / 64] |= bit;
        if v {
            self.value[col / 64] |= bit;
        } else {
            self.value[col / 64] &= !bit;
        }
    }

    /// Don't-cares become false.
    fn finalize(&self, n: usize) -> Vec<bool> {
        (0..n).map(|c| self.is_defined(c) && self.get(c)).collect()
    }
}

fn initial_block(t: usize, n: usize) -> Vec<PartialRow> {
    (0..1usize << t)
        .map(|code| {
            let mut row = PartialRow::empty(n);
            for col in 0..t {
                row.set(col, code >> (t - 1 - col) & 1 == 1);
            }
            row
        })
        .collect()
}

/// Uncovered tuples for one new column.
///
/// Storage is triangular: a prefix whose largest column is `m` only keeps the
/// words from the one holding bit `m + 1` onwards.
struct Planes {
    t: usize,
    /// Words in a full-width plane.
    words: usize,
    /// Flattened (t-2)-subsets of `0..c-1`, in colex order.
    prefixes: Vec<u32>,
    /// First stored word for each prefix.
    first_word: Vec<u32>,
    /// Start of each prefix's block in `bits`.
    offsets: Vec<usize>,
    bits: Vec<u64>,
}

impl Planes {
    fn new(c: usize, t: usize) -> Self {
        let m = t - 2;
        let words = c.div_ceil(64);
        let planes_per_prefix = 1usize << t;
        let mut prefixes = Vec::new();
        let mut first_word = Vec::new();
        let mut offsets = Vec::new();
        let mut total = 0usize;
        for_each_subset(c.saturating_sub(1), m, |s| {
            prefixes.extend(s.iter().map(|&x| x as u32));
            let lo = s.last().map_or(0, |&x| x + 1);
            first_word.push((lo / 64) as u32);
            offsets.push(total);
            total += planes_per_prefix * (words - lo / 64);
        });

        let mut bits = vec![0u64; total];
        for p in 0..first_word.len() {
            let lo = if m == 0 {
                0
            } else {
                prefixes[p * m + m - 1] as usize + 1
            };
            let first = first_word[p] as usize;
            let len = words - first;
            let block = &mut bits[offsets[p]..offsets[p] + planes_per_prefix * len];
            let (template, rest) = block.split_at_mut(len);
            fill_range(template, lo - first * 64, c - first * 64);
            for plane in rest.chunks_exact_mut(len) {
                plane.copy_from_slice(template);
            }
        }
        Planes {
            t,
            words,
            prefixes,
            first_word,
            offsets,
            bits,
        }
    }

    fn num_prefixes(&self) -> usize {
        self.first_word.len()
    }

    fn prefix(&self, p: usize) -> &[u32] {
        let m = self.t - 2;
        &self.prefixes[p * m..(p + 1) * m]
    }

    /// Offset of the four planes `(d_value, v)` for one prefix pattern, and
    /// the stored plane length.
    #[inline]
    fn block(&self, p: usize, pattern: usize) -> (usize, usize) {
        let len = self.words - self.first_word[p] as usize;
        (self.offsets[p] + pattern * 4 * len, len)
    }

    /// Pattern of a row over the prefix, or `None` if a prefix cell is a
    /// don't-care. `cells` comes from [`cell_states`].
    #[inline]
    fn prefix_pattern(&self, p: usize, cells: &[u8]) -> Option<usize> {
        let mut pattern = 0usize;
        for &col in self.prefix(p) {
            let cell = cells[col as usize];
            if cell == DONT_CARE {
                return None;
            }
            pattern = pattern << 1 | cell as usize;
        }
        Some(pattern)
    }

    /// Number of uncovered tuples `row` would cover with value false / true.
    fn gains(&self, row: &PartialRow, cells: &[u8]) -> [u64; 2] {
        let mut gains = [0u64; 2];
        for p in 0..self.num_prefixes() {
            let Some(pattern) = self.prefix_pattern(p, cells) else {
                continue;
            };
            let (base, len) = self.block(p, pattern);
            let first = self.first_word[p] as usize;
            let planes = &self.bits[base..base + 4 * len];
            for k in 0..len {
                let word = first + k;
                let ones = row.value[word] & row.defined[word];
                let zeros = !row.value[word] & row.defined[word];
                for (v, gain) in gains.iter_mut().enumerate() {
                    let d0 = planes[v * len + k];
                    let d1 = planes[(2 + v) * len + k];
                    *gain += ((d0 & zeros) | (d1 & ones)).count_ones() as u64;
                }
            }
        }
        gains
    }

    /// Marks every tuple covered by `row` with new-column value `v`.
    fn cover(&mut self, row: &PartialRow, cells: &[u8], v: bool) {
        let v = v as usize;
        for p in 0..self.num_prefixes() {
            let Some(pattern) = self.prefix_pattern(p, cells) else {
                continue;
            };
            let (base, len) = self.block(p, pattern);
            let first = self.first_word[p] as usize;
            for k in 0..len {
                let word = first + k;
                let ones = row.value[word] & row.defined[word];
                let zeros = !row.value[word] & row.defined[word];
                self.bits[base + v * len + k] &= !zeros;
                self.bits[base + (2 + v) * len + k] &= !ones;
            }
        }
    }

    /// Remaining uncovered tuples as (columns, values, new-column value).
    fn uncovered(&self) -> Vec<(Vec<usize>, Vec<bool>, bool)> {
        let m = self.t - 2;
        let mut out = Vec::new();
        for p in 0..self.num_prefixes() {
            let first = self.first_word[p] as usize;
            for pattern in 0..1usize << m {
                let (base, len) = self.block(p, pattern);
                for dv in 0..2 {
                    for v in 0..2 {
                        let start = base + (2 * dv + v) * len;
                        let plane = &self.bits[start..start + len];
                        for (k, &word) in plane.iter().enumerate() {
                            let mut bits = word;
                            while bits != 0 {
                                let d = (first + k) * 64 + bits.trailing_zeros() as usize;
                                bits &= bits - 1;
                                let mut cols: Vec<usize> =
                                    self.prefix(p).iter().map(|&x| x as usize).collect();
                                cols.push(d);
                                let mut vals: Vec<bool> =
                                    (0..m).map(|k| pattern >> (m - 1 - k) & 1 == 1).collect();
                                vals.push(dv == 1);
                                out.push((cols, vals, v == 1));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

const DONT_CARE: u8 = 2;

/// Writes, per column, 0, 1, or [`DONT_CARE`] into `out`.
fn cell_states(row: &PartialRow, out: &mut [u8]) {
    for (col, cell) in out.iter_mut().enumerate() {
        *cell = if row.is_defined(col) { row.get(col) as u8 } else { DONT_CARE };
    }
}

fn extend_column(rows: &mut Vec<PartialRow>, c: usize, t: usize, rng: &mut ChaCha8Rng) {
    let mut planes = Planes::new(c, t);

    // Horizontal extension.
    let mut cells = vec![DONT_CARE; planes.words * 64];
    for row in rows.iter_mut() {
        cell_states(row, &mut cells);
        let [g0, g1] = planes.gains(row, &cells);
        if g0 == 0 && g1 == 0 {
            // Nothing to gain: leave a don't-care for vertical extension.
            continue;
        }
        // Ties go to false.
        let v = g1 > g0;
        planes.cover(row, &cells, v);
        row.set(c, v);
    }

    // Vertical extension.
    let mut missing = planes.uncovered();
    drop(planes);
    missing.shuffle(rng);
    let n_words = rows.first().map_or(1, |r| r.value.len());
    for (cols, vals, v) in missing {
        let fits = |row: &PartialRow| {
            cols.iter()
                .zip(&vals)
                .chain(std::iter::once((&c, &v)))
                .all(|(&col, &val)| !row.is_defined(col) || row.get(col) == val)
        };
        let row = match rows.iter().position(fits) {
            Some(i) => &mut rows[i],
            None => {
                rows.push(PartialRow {
                    value: vec![0; n_words],
                    defined: vec![0; n_words],
                });
                rows.last_mut().unwrap()
            }
        };
        for (&col, &val) in cols.iter().zip(&vals) {
            row.set(col, val);
        }
        row.set(c, v);
    }
}

/// Sets bits `lo..hi` of a word slice.
fn fill_range(words: &mut [u64], lo: usize, hi: usize) {
    if lo >= hi {
        return;
    }
    let (first, last) = (lo / 64, (hi - 1) / 64);
    for w in &mut words[first..=last] {
        *w = !0;
    }
    words[first] &= !0u64 << (lo % 64);
    if hi % 64 != 0 {
        words[last] &= !0u64 >> (64 - hi % 64);
    }
}

/// Calls `f` with every k-subset of `0..n` in colex order (ascending by the
/// largest element). The empty set is visited once when `k == 0`.
pub(crate) fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 {
        f(&[]);
        return;
    }
    if k > n {
        return;
    }
    let mut s: Vec<usize> = (0..k).collect();
    loop {
        f(&s);
        // Colex successor: bump the first element that can move.
        let mut i = 0;
        while i + 1 < k && s[i] + 1 == s[i + 1] {
            i += 1;
        }
        if i + 1 == k && s[i] + 1 == n {
            return;
        }
        s[i] += 1;
        for (j, slot) in s.iter_mut().enumerate().take(i) {
            *slot = j;
        }
    }
}

pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{verify_coverage, VerifyMode};

    #[test]
    fn colex_subsets_are_complete_and_ordered() {
        let mut seen = Vec::new();
        for_each_subset(5, 3, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen.first().unwrap(), &vec![0, 1, 2]);
        assert_eq!(seen.last().unwrap(), &vec![2, 3, 4]);
        let lasts: Vec<usize> = seen.iter().map(|s| s[2]).collect();
        assert!(lasts.windows(2).all(|w| w[0] <= w[1]));
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);

        let mut empties = 0;
        for_each_subset(4, 0, |s| {
            assert!(s.is_empty());
            empties += 1;
        });
        assert_eq!(empties, 1);
    }

    #[test]
    fn fill_range_matches_bitwise_fill() {
        for lo in 0..130 {
            for hi in lo..=192 {
                let mut fast = vec![0u64; 3];
                fill_range(&mut fast, lo, hi);
                let mut slow = vec![0u64; 3];
                for bit in lo..hi {
                    slow[bit / 64] |= 1 << (bit % 64);
                }
                assert_eq!(fast, slow, "lo={lo} hi={hi}");
            }
        }
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(506, 3), 21_464_520);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn two_rules_strength_two_is_full_factorial() {
        let guide = Guide::synthetic("g", 2);
        let array = generate_ipog(&guide, Strength::new(2).unwrap(), 0).unwrap();
        assert_eq!(array.num_rows(), 4);
        let mut rows = array.rows().to_vec();
        rows.sort();
        assert_eq!(
            rows,
            vec![
                vec![false, false],
                vec![false, true],
                vec![true, false],
                vec![true, true]
            ]
        );
    }

    #[test]
    fn strength_above_rule_count_is_rejected() {
        let guide = Guide::synthetic("g", 3);
        assert!(matches!(
            generate_ipog(&guide, Strength::new(4).unwrap(), 0),
            Err(Error::StrengthExceedsRules { strength: 4, rules: 3 })
        ));
    }

    #[test]
    fn high_strength_on_large_guides_needs_force() {
        let guide = Guide::synthetic("g", 101);
        let err = generate_ipog(&guide, Strength::new(5).unwrap(), 0).unwrap_err();
        assert!(matches!(err, Error::ResourceBound { strength: 5, rules: 101, .. }));
    }

    #[test]
    fn generated_arrays_cover_small_guides() {
        for t in 2..=4 {
            for n in t..=14 {
                let guide = Guide::synthetic("g", n);
                let array = generate_ipog(&guide, Strength::new(t).unwrap(), 7).unwrap();
                let report = verify_coverage(&array, VerifyMode::Exhaustive);
                assert!(report.covered, "t={t} n={n}: {:?}", report.missing.first());
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let guide = Guide::synthetic("g", 40);
        let t = Strength::new(3).unwrap();
        let a = generate_ipog(&guide, t, 11).unwrap();
        let b = generate_ipog(&guide, t, 11).unwrap();
        assert_eq!(
            crate::model::to_json_string(&a),
            crate::model::to_json_string(&b)
        );
    }
}
