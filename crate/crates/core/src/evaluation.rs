//! Simulation study over a corpus of breaking sets, cluster grid, and the
//! effort estimate for a real testing campaign.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, gate_with_oracle};
use crate::covering::CoveringArray;
use crate::dtree::TreeParams;
use crate::error::{Error, Result};
use crate::harness::simulate_tuples;
use crate::model::{Guide, RuleId, Strategy, Verdict};
use crate::oracle::{check_exclusion, Classification, CorpusEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyClass {
    Exact,
    SubsetOfCorrect,
    Wrong,
    /// The strategy produced no solution.
    None,
}

impl From<Classification> for StudyClass {
    fn from(c: Classification) -> Self {
        match c {
            Classification::Exact => StudyClass::Exact,
            Classification::SubsetOfCorrect => StudyClass::SubsetOfCorrect,
            Classification::Wrong => StudyClass::Wrong,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub set_name: String,
    pub cell: Option<(usize, usize)>,
    pub strategy: Strategy,
    pub classification: StudyClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<BTreeSet<RuleId>>,
    pub verified_non_breaking: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOutcome {
    Full,
    Partial,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterCell {
    pub n_clauses: usize,
    pub max_rules_per_clause: usize,
    pub outcome: CellOutcome,
    pub n_sets: usize,
    pub n_exact: usize,
    pub n_subset: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub exact: usize,
    pub subset_of_correct: usize,
    pub wrong: usize,
    pub none: usize,
    pub exact_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub guide_id: String,
    pub strength: usize,
    pub records: Vec<StudyRecord>,
    pub grids: BTreeMap<Strategy, Vec<ClusterCell>>,
    pub summary: BTreeMap<Strategy, StrategySummary>,
}

/// Simulates every corpus member on `array`, runs each strategy, gates the
/// solution with the oracle and classifies it. Analysis errors become
/// [`StudyClass::None`] with the error as reason.
pub fn run_study(
    guide: &Guide,
    corpus: &[CorpusEntry],
    array: &CoveringArray,
    strategies: &[Strategy],
    params: TreeParams,
) -> Result<StudyReport> {
    array.check_matches(guide)?;
    let all: BTreeSet<RuleId> = guide.rules().iter().cloned().collect();
    let per_set: Vec<Result<Vec<StudyRecord>>> = corpus
        .par_iter()
        .map(|entry| {
            let dnf = &entry.dnf;
            let results = if dnf.is_breaking(&all) {
                Some(simulate_tuples(dnf, guide, array)?)
            } else {
                None
            };
            let mut out = Vec::with_capacity(strategies.len());
            for &strategy in strategies {
                let solution = match &results {
                    // The full guide passes: nothing to exclude.
                    None => Ok(crate::model::Solution::unverified(strategy, BTreeSet::new())),
                    Some(results) => analyze(results, guide, strategy, params),
                };
                let record = match solution {
                    Ok(solution) => {
                        let solution = gate_with_oracle(guide, dnf, solution);
                        let check = check_exclusion(guide, dnf, &solution.excluded);
                        StudyRecord {
                            set_name: dnf.name().to_string(),
                            cell: entry.cell,
                            strategy,
                            classification: check.classification.into(),
                            verified_non_breaking: solution.verified_non_breaking,
                            excluded: Some(solution.excluded),
                            reason: None,
                        }
                    }
                    Err(e) => StudyRecord {
                        set_name: dnf.name().to_string(),
                        cell: entry.cell,
                        strategy,
                        classification: StudyClass::None,
                        excluded: None,
                        verified_non_breaking: Verdict::Unknown,
                        reason: Some(e.to_string()),
                    },
                };
                out.push(record);
            }
            Ok(out)
        })
        .collect();
    let mut records = Vec::new();
    for r in per_set {
        records.extend(r?);
    }

    let mut grids = BTreeMap::new();
    let mut summary = BTreeMap::new();
    for &strategy in strategies {
        let mine: Vec<&StudyRecord> = records.iter().filter(|r| r.strategy == strategy).collect();
        grids.insert(strategy, cluster_grid(&mine));
        summary.insert(strategy, summarize(&mine));
    }
    Ok(StudyReport {
        guide_id: guide.id().to_string(),
        strength: array.strength().get(),
        records,
        grids,
        summary,
    })
}

/// Aggregates records of one strategy per (clauses, rules per clause) cell,
/// ordered by cell. Records without a cell are skipped.
pub fn cluster_grid(records: &[&StudyRecord]) -> Vec<ClusterCell> {
    let mut cells: BTreeMap<(usize, usize), (usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let Some(cell) = r.cell else {
            continue;
        };
        let e = cells.entry(cell).or_default();
        e.0 += 1;
        match r.classification {
            StudyClass::Exact => e.1 += 1,
            StudyClass::SubsetOfCorrect => e.2 += 1,
            _ => {}
        }
    }
    cells
        .into_iter()
        .map(|((c, k), (n_sets, n_exact, n_subset))| ClusterCell {
            n_clauses: c,
            max_rules_per_clause: k,
            outcome: if n_exact == n_sets {
                CellOutcome::Full
            } else if n_exact == 0 && n_subset == 0 {
                CellOutcome::None
            } else {
                CellOutcome::Partial
            },
            n_sets,
            n_exact,
            n_subset,
        })
        .collect()
}

fn summarize(records: &[&StudyRecord]) -> StrategySummary {
    let mut s = StrategySummary::default();
    for r in records {
        match r.classification {
            StudyClass::Exact => s.exact += 1,
            StudyClass::SubsetOfCorrect => s.subset_of_correct += 1,
            StudyClass::Wrong => s.wrong += 1,
            StudyClass::None => s.none += 1,
        }
    }
    if !records.is_empty() {
        s.exact_percent = 100.0 * s.exact as f64 / records.len() as f64;
    }
    s
}

pub fn emit_cluster_csv(grid: &[ClusterCell]) -> String {
    let mut out = String::from("n_clauses,max_rules,outcome,n_sets,n_exact\n");
    for cell in grid {
        let outcome = match cell.outcome {
            CellOutcome::Full => "full",
            CellOutcome::Partial => "partial",
            CellOutcome::None => "none",
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            cell.n_clauses, cell.max_rules_per_clause, outcome, cell.n_sets, cell.n_exact
        )
        .unwrap();
    }
    out
}

/// Inputs of the effort estimate; times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortParams {
    pub n_tuples: u64,
    pub n_vms: u64,
    /// Creating one instance.
    pub t_vm: f64,
    /// Installing the software under test.
    pub t_sw: f64,
    /// Applying one tuple.
    pub t_a: f64,
    /// Running the tests once.
    pub t_t: f64,
    /// Resetting after a tuple.
    pub t_sr: f64,
    /// Analysing the results.
    pub t_ana: f64,
}

/// `n_vms * t_vm + t_sw + ceil(n_tuples / n_vms) * (t_a + t_t + t_sr) + t_ana`.
pub fn effort_estimate(p: &EffortParams) -> Result<f64> {
    if p.n_vms == 0 {
        return Err(Error::ZeroInstances);
    }
    let times = [p.t_vm, p.t_sw, p.t_a, p.t_t, p.t_sr, p.t_ana];
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::Validation("effort times must be finite and non-negative".into()));
    }
    let per_instance = p.n_tuples.div_ceil(p.n_vms) as f64;
    Ok(p.n_vms as f64 * p.t_vm + p.t_sw + per_instance * (p.t_a + p.t_t + p.t_sr) + p.t_ana)
}
