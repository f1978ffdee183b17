//! Ground truth for simulated runs.
//!
//! Breakage is described by a DNF over rules with positive literals only:
//! the tests fail iff every rule of at least one clause is applied. The
//! brute-force routines here are the reference that analysis results are
//! checked against.

mod corpus;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{read_json, write_json, Guide, RuleId, RuleTuple, RunRecord, Solution, Stage};

pub use corpus::{gen_corpus, relabel_variant, CorpusEntry, CorpusSpec};

/// Largest number of clause variables the brute-force search accepts.
pub const BRUTE_FORCE_LIMIT: usize = 24;

/// Failing test name used for simulated breakage.
pub const SIMULATED_TEST: &str = "simulated";

/// A conjunction of rules that breaks the tests when all are applied.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<RuleId>", into = "Vec<RuleId>")]
pub struct Clause(BTreeSet<RuleId>);

impl Clause {
    pub fn new(rules: impl IntoIterator<Item = RuleId>) -> Result<Self> {
        let rules: BTreeSet<RuleId> = rules.into_iter().collect();
        if rules.is_empty() {
            return Err(Error::Validation("a breaking clause needs at least one rule".into()));
        }
        Ok(Clause(rules))
    }

    pub fn rules(&self) -> &BTreeSet<RuleId> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<RuleId>> for Clause {
    type Error = Error;

    fn try_from(rules: Vec<RuleId>) -> Result<Self> {
        Clause::new(rules)
    }
}

impl From<Clause> for Vec<RuleId> {
    fn from(c: Clause) -> Self {
        c.0.into_iter().collect()
    }
}

/// Breaking rule combinations in disjunctive normal form. No clauses means
/// nothing breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DnfFile")]
pub struct BreakingSetDnf {
    name: String,
    clauses: Vec<Clause>,
}

#[derive(Deserialize)]
struct DnfFile {
    name: String,
    clauses: Vec<Clause>,
}

impl TryFrom<DnfFile> for BreakingSetDnf {
    type Error = Error;

    fn try_from(f: DnfFile) -> Result<Self> {
        Ok(BreakingSetDnf::new(f.name, f.clauses))
    }
}

impl BreakingSetDnf {
    /// Drops duplicate clauses and clauses that contain another clause.
    pub fn new(name: impl Into<String>, clauses: Vec<Clause>) -> Self {
        let mut kept: Vec<Clause> = Vec::with_capacity(clauses.len());
        for (i, clause) in clauses.iter().enumerate() {
            let redundant = clauses.iter().enumerate().any(|(j, other)| {
                other.0.is_subset(&clause.0) && (other.len() < clause.len() || (other == clause && j < i))
            });
            if !redundant {
                kept.push(clause.clone());
            }
        }
        BreakingSetDnf {
            name: name.into(),
            clauses: kept,
        }
    }

    pub fn empty(name: impl Into<String>) -> Self {
        BreakingSetDnf::new(name, Vec::new())
    }

    /// Convenience constructor from string ids.
    pub fn from_ids(name: impl Into<String>, clauses: &[&[&str]]) -> Result<Self> {
        let clauses = clauses
            .iter()
            .map(|c| Clause::new(c.iter().map(|id| RuleId::new(*id)).collect::<Result<Vec<_>>>()?))
            .collect::<Result<Vec<_>>>()?;
        Ok(BreakingSetDnf::new(name, clauses))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        BreakingSetDnf {
            name: name.into(),
            clauses: self.clauses.clone(),
        }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Largest clause size (0 for the empty set).
    pub fn max_clause_len(&self) -> usize {
        self.clauses.iter().map(Clause::len).max().unwrap_or(0)
    }

    pub fn is_breaking(&self, applied: &BTreeSet<RuleId>) -> bool {
        self.clauses.iter().any(|c| c.0.is_subset(applied))
    }

    /// Clause rule positions in `guide`; clauses naming rules outside the
    /// guide can never fire and are left out.
    pub fn compile(&self, guide: &Guide) -> CompiledDnf {
        let clauses = self
            .clauses
            .iter()
            .filter_map(|c| c.0.iter().map(|r| guide.position(r)).collect::<Option<Vec<_>>>())
            .collect();
        CompiledDnf { clauses }
    }
}

/// A DNF resolved against one guide's column order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledDnf {
    clauses: Vec<Vec<usize>>,
}

impl CompiledDnf {
    pub fn is_breaking(&self, selection: &[bool]) -> bool {
        self.clauses
            .iter()
            .any(|c| c.iter().all(|&pos| selection[pos]))
    }

    pub fn clauses(&self) -> &[Vec<usize>] {
        &self.clauses
    }
}

pub fn load_dnf(path: &Path) -> Result<BreakingSetDnf> {
    read_json(path)
}

pub fn save_dnf(path: &Path, dnf: &BreakingSetDnf) -> Result<()> {
    write_json(path, dnf)
}

/// Simulated test run of one tuple.
pub fn evaluate_tuple_simulated(
    dnf: &BreakingSetDnf,
    guide: &Guide,
    tuple: &RuleTuple,
) -> Result<RunRecord> {
    let applied = guide.tuple_to_applied(tuple)?;
    let broken = dnf.is_breaking(&applied);
    Ok(RunRecord {
        tuple_index: tuple.index,
        applied,
        passed: !broken,
        failed_tests: if broken { vec![SIMULATED_TEST.to_string()] } else { vec![] },
        stage: Stage::Tuple,
    })
}

/// Every minimal set of rules whose exclusion stops all breakage, found by
/// enumerating subsets of the clause variables.
pub fn brute_force_exclusions(guide: &Guide, dnf: &BreakingSetDnf) -> Result<Vec<BTreeSet<RuleId>>> {
    let compiled = dnf.compile(guide);
    let mut vars: Vec<usize> = compiled.clauses.iter().flatten().copied().collect();
    vars.sort_unstable();
    vars.dedup();
    if vars.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyVariables {
            count: vars.len(),
            limit: BRUTE_FORCE_LIMIT,
            hint: "brute force is exponential in the clause variables",
        });
    }
    let masks: Vec<u32> = compiled
        .clauses
        .iter()
        .map(|c| {
            c.iter()
                .map(|pos| 1u32 << vars.binary_search(pos).unwrap())
                .fold(0, |a, b| a | b)
        })
        .collect();
    let hits = |set: u32| masks.iter().all(|&m| set & m != 0);

    let mut out: Vec<BTreeSet<RuleId>> = Vec::new();
    for set in 0u32..(1u32 << vars.len()) {
        if !hits(set) {
            continue;
        }
        let minimal = (0..vars.len())
            .filter(|b| set >> b & 1 == 1)
            .all(|b| !hits(set & !(1 << b)));
        if minimal {
            out.push(
                (0..vars.len())
                    .filter(|b| set >> b & 1 == 1)
                    .map(|b| guide.rules()[vars[b]].clone())
                    .collect(),
            );
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Every maximal non-breaking subset of the guide.
pub fn brute_force_maximal_sets(guide: &Guide, dnf: &BreakingSetDnf) -> Result<Vec<BTreeSet<RuleId>>> {
    let mut sets: Vec<BTreeSet<RuleId>> = brute_force_exclusions(guide, dnf)?
        .into_iter()
        .map(|excluded| {
            guide
                .rules()
                .iter()
                .filter(|r| !excluded.contains(*r))
                .cloned()
                .collect()
        })
        .collect();
    sets.sort();
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Non-breaking and maximal.
    Exact,
    /// Non-breaking but some excluded rule could be added back.
    SubsetOfCorrect,
    /// Still breaking.
    Wrong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SolutionCheck {
    pub non_breaking: bool,
    pub maximal: bool,
    pub classification: Classification,
}

pub fn verify_solution(guide: &Guide, dnf: &BreakingSetDnf, solution: &Solution) -> SolutionCheck {
    check_exclusion(guide, dnf, &solution.excluded)
}

pub fn check_exclusion(guide: &Guide, dnf: &BreakingSetDnf, excluded: &BTreeSet<RuleId>) -> SolutionCheck {
    let candidate: BTreeSet<RuleId> = guide
        .rules()
        .iter()
        .filter(|r| !excluded.contains(*r))
        .cloned()
        .collect();
    let non_breaking = !dnf.is_breaking(&candidate);
    let maximal = non_breaking
        && excluded.iter().filter(|r| guide.contains(r)).all(|r| {
            let mut with = candidate.clone();
            with.insert(r.clone());
            dnf.is_breaking(&with)
        });
    let classification = match (non_breaking, maximal) {
        (true, true) => Classification::Exact,
        (true, false) => Classification::SubsetOfCorrect,
        _ => Classification::Wrong,
    };
    SolutionCheck {
        non_breaking,
        maximal,
        classification,
    }
}
