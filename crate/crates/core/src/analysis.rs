//! Strategy dispatch and the verification gate applied to every solution.

use std::collections::BTreeSet;

use crate::dtree::{find_solution, train_tree, TreeParams};
use crate::error::Result;
use crate::harness::{confirm_solution, Evaluator};
use crate::model::{Guide, ResultSet, Solution, Strategy, Verdict};
use crate::oracle::{check_exclusion, BreakingSetDnf};

/// Computes an unverified solution from tuple results. A run in which no
/// tuple failed excludes nothing, whatever the strategy.
pub fn analyze(results: &ResultSet, guide: &Guide, strategy: Strategy, params: TreeParams) -> Result<Solution> {
    results.validate_against(guide)?;
    if results.tuple_records().all(|r| r.passed) {
        return Ok(Solution::unverified(strategy, BTreeSet::new()));
    }
    match strategy {
        Strategy::LogicMin => crate::logic::analyze(results, guide).map(|(_, _, s)| s),
        Strategy::DtreeShortestPath | Strategy::DtreeMaxPartition => {
            let tree = train_tree(results, guide, params)?;
            find_solution(&tree, strategy)
        }
    }
}

/// Fills both verdicts from the breaking-set oracle.
pub fn gate_with_oracle(guide: &Guide, dnf: &BreakingSetDnf, mut solution: Solution) -> Solution {
    let check = check_exclusion(guide, dnf, &solution.excluded);
    solution.verified_non_breaking = check.non_breaking.into();
    solution.verified_maximal = check.maximal.into();
    solution
}

/// Runs one confirmation tuple applying exactly the candidate set.
/// Maximality cannot be confirmed this way and stays unknown.
pub fn gate_with_confirmation(evaluator: &dyn Evaluator, guide: &Guide, mut solution: Solution) -> Result<Solution> {
    let passed = confirm_solution(evaluator, guide, &solution)?;
    if !passed {
        tracing::warn!("confirmation run failed; the solution is not non-breaking");
    }
    solution.verified_non_breaking = passed.into();
    solution.verified_maximal = Verdict::Unknown;
    Ok(solution)
}
