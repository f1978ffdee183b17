//! Exact analysis by two-level logic minimization.
//!
//! Tested tuples form the on-set (breaking) and off-set (passing) of a
//! partial boolean function; untested combinations are don't-cares. The
//! function is minimized to a cover of prime implicants and the excluded
//! rules are a minimum set hitting the positive literals of every implicant.
//!
//! Before minimization the variables are pruned in three steps:
//! 1. columns that are constant across all tested rows;
//! 2. rules never applied in a failing row;
//! 3. everything outside a greedy separating set, i.e. a set of rules such
//!    that every failing row has one of them applied where a passing row
//!    does not.
//!
//! A step whose projection would make a failing and a passing row identical
//! is rolled back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bitset::BitSet;
use crate::error::{Error, Result};
use crate::model::{Guide, ResultSet, RuleId, Solution, Strategy};

/// Largest table [`minimize`] accepts.
pub const MAX_VARIABLES: usize = 20;

const TOO_MANY_HINT: &str = "use the dtree strategy for tables this wide";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthTable {
    pub variables: Vec<RuleId>,
    pub on_rows: Vec<Vec<bool>>,
    pub off_rows: Vec<Vec<bool>>,
}

/// A product term; rules absent from `literals` are don't-cares.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Implicant {
    pub literals: BTreeMap<RuleId, bool>,
}

impl Implicant {
    pub fn positive(&self) -> impl Iterator<Item = &RuleId> {
        self.literals.iter().filter(|(_, &v)| v).map(|(r, _)| r)
    }

    pub fn covers(&self, variables: &[RuleId], row: &[bool]) -> bool {
        variables
            .iter()
            .zip(row)
            .all(|(var, &value)| self.literals.get(var).map_or(true, |&lit| lit == value))
    }
}

impl fmt::Display for Implicant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.literals.is_empty() {
            return f.write_str("1");
        }
        for (i, (rule, &value)) in self.literals.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            if !value {
                f.write_str("!")?;
            }
            write!(f, "{rule}")?;
        }
        Ok(())
    }
}

pub fn build_table(results: &ResultSet, guide: &Guide) -> Result<TruthTable> {
    results.validate_against(guide)?;

    // Same rules applied with different outcomes counts as breaking.
    let mut outcome: BTreeMap<Vec<bool>, bool> = BTreeMap::new();
    for record in results.tuple_records() {
        let selection = guide.applied_to_selection(&record.applied)?;
        *outcome.entry(selection).or_insert(false) |= !record.passed;
    }
    let (on, off): (Vec<_>, Vec<_>) = outcome.into_iter().partition(|(_, breaking)| *breaking);
    let on: Vec<Vec<bool>> = on.into_iter().map(|(row, _)| row).collect();
    let off: Vec<Vec<bool>> = off.into_iter().map(|(row, _)| row).collect();

    let n = guide.len();
    let mut keep = vec![true; n];

    let constant: Vec<bool> = (0..n)
        .map(|j| {
            let mut values = on.iter().chain(&off).map(|r| r[j]);
            match values.next() {
                Some(first) => values.all(|v| v == first),
                None => true,
            }
        })
        .collect();
    try_prune(&mut keep, |j| constant[j], &on, &off);

    let in_failing: Vec<bool> = (0..n).map(|j| on.iter().any(|r| r[j])).collect();
    try_prune(&mut keep, |j| !in_failing[j], &on, &off);

    if keep.iter().filter(|&&k| k).count() > 0 && !on.is_empty() {
        let separating = separating_set(&on, &off, &keep, guide.rules());
        try_prune(&mut keep, |j| !separating.contains(&j), &on, &off);
    }

    let columns: Vec<usize> = (0..n).filter(|&j| keep[j]).collect();
    let project = |rows: &[Vec<bool>]| -> Vec<Vec<bool>> {
        let set: BTreeSet<Vec<bool>> = rows
            .iter()
            .map(|r| columns.iter().map(|&j| r[j]).collect())
            .collect();
        set.into_iter().collect()
    };
    Ok(TruthTable {
        variables: columns.iter().map(|&j| guide.rules()[j].clone()).collect(),
        on_rows: project(&on),
        off_rows: project(&off),
    })
}

/// Drops the columns selected by `drop` unless that merges an on-row with an
/// off-row.
fn try_prune(keep: &mut [bool], drop: impl Fn(usize) -> bool, on: &[Vec<bool>], off: &[Vec<bool>]) {
    let trial: Vec<bool> = keep.iter().enumerate().map(|(j, &k)| k && !drop(j)).collect();
    let key = |row: &Vec<bool>| -> Vec<bool> {
        row.iter().zip(&trial).filter(|(_, &k)| k).map(|(&v, _)| v).collect()
    };
    let off_keys: BTreeSet<Vec<bool>> = off.iter().map(key).collect();
    if on.iter().any(|r| off_keys.contains(&key(r))) {
        tracing::debug!("pruning step rolled back: projection merges a failing and a passing row");
        return;
    }
    keep.copy_from_slice(&trial);
}

/// Greedy set of column indices separating every (on, off) pair. A pair is
/// separated by a column applied in the on-row but not in the off-row; pairs
/// where no such column exists fall back to columns applied only in the
/// off-row. Columns forced by a pair with a single candidate come first, then
/// the column separating the most remaining pairs, ties to the smallest
/// rule id.
fn separating_set(on: &[Vec<bool>], off: &[Vec<bool>], keep: &[bool], rules: &[RuleId]) -> BTreeSet<usize> {
    let cols: Vec<usize> = (0..keep.len()).filter(|&j| keep[j]).collect();
    // Bitsets over on-rows and off-rows per column.
    let on_has: Vec<BitSet> = cols
        .iter()
        .map(|&j| BitSet::from_bools(&on.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let off_lacks: Vec<BitSet> = cols
        .iter()
        .map(|&j| BitSet::from_bools(&off.iter().map(|r| !r[j]).collect::<Vec<_>>()))
        .collect();

    // unhit[f] = off rows not yet separated from on row f by a forward column.
    let mut unhit: Vec<BitSet> = vec![BitSet::full(off.len()); on.len()];
    // Pairs with no forward candidate, with their candidate columns.
    let mut reverse: Vec<Vec<usize>> = Vec::new();
    let mut forced = BTreeSet::new();
    for (fi, f) in on.iter().enumerate() {
        for (pi, p) in off.iter().enumerate() {
            let forward: Vec<usize> = (0..cols.len()).filter(|&c| f[cols[c]] && !p[cols[c]]).collect();
            match forward.len() {
                0 => {
                    let backward: Vec<usize> =
                        (0..cols.len()).filter(|&c| !f[cols[c]] && p[cols[c]]).collect();
                    // Identical rows never reach here: try_prune keeps them apart.
                    if backward.len() == 1 {
                        forced.insert(backward[0]);
                    }
                    reverse.push(backward);
                    unhit[fi] = unhit[fi].and_not(&single(off.len(), pi));
                }
                1 => {
                    forced.insert(forward[0]);
                }
                _ => {}
            }
        }
    }

    let mut chosen = BTreeSet::new();
    let mut take = |c: usize, unhit: &mut Vec<BitSet>, reverse: &mut Vec<Vec<usize>>| {
        chosen.insert(cols[c]);
        for fi in on_has[c].iter() {
            unhit[fi] = unhit[fi].and_not(&off_lacks[c]);
        }
        reverse.retain(|cands| !cands.contains(&c));
    };
    for &c in &forced {
        take(c, &mut unhit, &mut reverse);
    }

    let mut by_rule: Vec<usize> = (0..cols.len()).collect();
    by_rule.sort_by(|&a, &b| rules[cols[a]].cmp(&rules[cols[b]]));
    loop {
        let remaining = unhit.iter().map(BitSet::count).sum::<usize>() + reverse.len();
        if remaining == 0 {
            break;
        }
        let mut best: Option<(usize, usize)> = None;
        for &c in &by_rule {
            let forward: usize = on_has[c].iter().map(|fi| unhit[fi].and_count(&off_lacks[c])).sum();
            let backward = reverse.iter().filter(|cands| cands.contains(&c)).count();
            let gain = forward + backward;
            if gain > 0 && best.map_or(true, |(_, g)| gain > g) {
                best = Some((c, gain));
            }
        }
        let Some((c, _)) = best else {
            break;
        };
        take(c, &mut unhit, &mut reverse);
    }
    chosen
}

fn single(len: usize, i: usize) -> BitSet {
    let mut s = BitSet::new(len);
    s.insert(i);
    s
}

/// Cube over at most [`MAX_VARIABLES`] variables: `care` marks the literals,
/// `value` their polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Cube {
    care: u32,
    value: u32,
}

impl Cube {
    fn covers(self, row: u32) -> bool {
        row & self.care == self.value
    }

    fn literals(self) -> u32 {
        self.care.count_ones()
    }

    fn negatives(self) -> u32 {
        (self.care & !self.value).count_ones()
    }
}

fn pack(row: &[bool]) -> u32 {
    row.iter().enumerate().fold(0, |acc, (i, &b)| acc | (b as u32) << i)
}

/// Minimum-cardinality cover of the on-rows by prime implicants.
pub fn minimize(table: &TruthTable) -> Result<Vec<Implicant>> {
    let nv = table.variables.len();
    if nv > MAX_VARIABLES {
        return Err(Error::TooManyVariables {
            count: nv,
            limit: MAX_VARIABLES,
            hint: TOO_MANY_HINT,
        });
    }
    let on: Vec<u32> = table.on_rows.iter().map(|r| pack(r)).collect();
    let off: Vec<u32> = table.off_rows.iter().map(|r| pack(r)).collect();
    if let Some(row) = on.iter().find(|r| off.contains(r)) {
        return Err(Error::Validation(format!(
            "truth table row {row:#b} is both breaking and passing"
        )));
    }
    if on.is_empty() {
        return Ok(Vec::new());
    }

    let mut primes = BTreeSet::new();
    for &f in &on {
        let diffs: Vec<u32> = off.iter().map(|&p| f ^ p).collect();
        for care in minimal_hitting_sets(&diffs, nv) {
            primes.insert(Cube {
                care,
                value: f & care,
            });
        }
    }
    // Prefer positive and short terms when several minimum covers exist.
    let mut primes: Vec<Cube> = primes.into_iter().collect();
    primes.sort_by_key(|c| (c.negatives(), c.literals(), *c));

    let cover = min_cover(&on, &primes);
    let implicants: Vec<Implicant> = cover
        .iter()
        .map(|&i| {
            let cube = primes[i];
            Implicant {
                literals: (0..nv)
                    .filter(|&v| cube.care >> v & 1 == 1)
                    .map(|v| (table.variables[v].clone(), cube.value >> v & 1 == 1))
                    .collect(),
            }
        })
        .collect();

    for imp in &implicants {
        if let Some(row) = table.off_rows.iter().find(|r| imp.covers(&table.variables, r)) {
            return Err(Error::Validation(format!(
                "implicant {imp} covers passing row {row:?}"
            )));
        }
    }
    Ok(implicants)
}

/// All minimal subsets of `0..nv` (as bit masks) intersecting every mask in
/// `sets`.
fn minimal_hitting_sets(sets: &[u32], nv: usize) -> Vec<u32> {
    let mut sets: Vec<u32> = sets.to_vec();
    sets.sort_by_key(|s| s.count_ones());
    sets.dedup();
    // Supersets are implied by their subsets.
    let mut reduced: Vec<u32> = Vec::new();
    for &s in &sets {
        if !reduced.iter().any(|&r| r & s == r) {
            reduced.push(s);
        }
    }
    let mut out = Vec::new();
    hit_rec(&reduced, 0, nv, &mut out);
    out.retain(|&h| {
        (0..nv)
            .filter(|&b| h >> b & 1 == 1)
            .all(|b| reduced.iter().any(|&s| s & h & !(1 << b) == 0))
    });
    out.sort_unstable();
    out.dedup();
    out
}

fn hit_rec(sets: &[u32], chosen: u32, nv: usize, out: &mut Vec<u32>) {
    let Some(&open) = sets.iter().find(|&&s| s & chosen == 0) else {
        out.push(chosen);
        return;
    };
    for b in 0..nv {
        if open >> b & 1 == 1 {
            let next = chosen | 1 << b;
            // Skip branches that already contain a known solution.
            if out.iter().any(|&h| h & next == h) {
                continue;
            }
            hit_rec(sets, next, nv, out);
        }
    }
}

/// Exact minimum set cover of `on` by `primes` (indices into `primes`),
/// branching on the row with the fewest covering primes.
fn min_cover(on: &[u32], primes: &[Cube]) -> Vec<usize> {
    let covering: Vec<Vec<usize>> = on
        .iter()
        .map(|&r| (0..primes.len()).filter(|&i| primes[i].covers(r)).collect())
        .collect();
    let mut best: Option<Vec<usize>> = None;
    let mut current = Vec::new();
    let mut covered = vec![0u32; on.len()];
    cover_rec(&covering, &mut covered, &mut current, &mut best);
    let mut best = best.expect("every on-row is covered by its own primes");
    best.sort_unstable();
    best
}

fn cover_rec(
    covering: &[Vec<usize>],
    covered: &mut Vec<u32>,
    current: &mut Vec<usize>,
    best: &mut Option<Vec<usize>>,
) {
    let open = (0..covering.len())
        .filter(|&r| covered[r] == 0)
        .min_by_key(|&r| covering[r].len());
    let Some(row) = open else {
        if best.as_ref().map_or(true, |b| current.len() < b.len()) {
            *best = Some(current.clone());
        }
        return;
    };
    if best.as_ref().is_some_and(|b| current.len() + 1 >= b.len()) {
        return;
    }
    for &p in &covering[row] {
        let touched: Vec<usize> = (0..covering.len())
            .filter(|&r| covering[r].binary_search(&p).is_ok())
            .collect();
        for &r in &touched {
            covered[r] += 1;
        }
        current.push(p);
        cover_rec(covering, covered, current, best);
        current.pop();
        for &r in &touched {
            covered[r] -= 1;
        }
    }
}

/// Minimum set of rules containing a positive literal of every implicant;
/// among equally small sets the lexicographically smallest wins.
pub fn extract_exclusions(cover: &[Implicant], guide: &Guide) -> Result<Solution> {
    let mut targets: Vec<BTreeSet<&RuleId>> = Vec::with_capacity(cover.len());
    for imp in cover {
        for rule in imp.literals.keys() {
            if !guide.contains(rule) {
                return Err(Error::UnknownRule(rule.clone()));
            }
        }
        let pos: BTreeSet<&RuleId> = imp.positive().collect();
        if pos.is_empty() {
            return Err(Error::NonMonotone);
        }
        targets.push(pos);
    }
    let universe: Vec<&RuleId> = targets
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if universe.len() > MAX_VARIABLES {
        return Err(Error::TooManyVariables {
            count: universe.len(),
            limit: MAX_VARIABLES,
            hint: TOO_MANY_HINT,
        });
    }
    let masks: Vec<u32> = targets
        .iter()
        .map(|t| {
            t.iter()
                .map(|r| 1u32 << universe.binary_search(r).expect("rule is in the universe"))
                .fold(0, |a, b| a | b)
        })
        .collect();

    for k in 0..=universe.len() {
        if let Some(mask) = first_hitting_subset(&masks, universe.len(), k) {
            let excluded = (0..universe.len())
                .filter(|&b| mask >> b & 1 == 1)
                .map(|b| universe[b].clone())
                .collect();
            return Ok(Solution::unverified(Strategy::LogicMin, excluded));
        }
    }
    unreachable!("the whole universe hits every non-empty target")
}

/// First `k`-subset of `0..n` in lexicographic order hitting every mask.
fn first_hitting_subset(masks: &[u32], n: usize, k: usize) -> Option<u32> {
    fn rec(masks: &[u32], n: usize, k: usize, start: usize, chosen: u32) -> Option<u32> {
        if k == 0 {
            return masks.iter().all(|&m| m & chosen != 0).then_some(chosen);
        }
        for b in start..=n - k {
            if let Some(found) = rec(masks, n, k - 1, b + 1, chosen | 1 << b) {
                return Some(found);
            }
        }
        None
    }
    if k > n {
        return None;
    }
    rec(masks, n, k, 0, 0)
}

/// Table, cover and solution in one go; a run where nothing failed excludes
/// nothing.
pub fn analyze(results: &ResultSet, guide: &Guide) -> Result<(TruthTable, Vec<Implicant>, Solution)> {
    let table = build_table(results, guide)?;
    let cover = minimize(&table)?;
    let solution = extract_exclusions(&cover, guide)?;
    Ok((table, cover, solution))
}
