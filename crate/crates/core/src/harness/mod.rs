//! Test procedure: baseline, full guide, revert check, then every tuple
//! applied, tested and reset, spread over parallel workers.

mod external;
mod simulated;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use external::{ExternalConfig, ExternalEvaluator};
pub use simulated::SimulatedEvaluator;

use crate::covering::CoveringArray;
use crate::error::{Error, Result};
use crate::model::{Guide, ResultSet, RuleId, RunRecord, Solution, Stage, UntestedTuple, Verdict};
use crate::oracle::BreakingSetDnf;

/// Result of one test-suite run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestOutcome {
    pub passed: bool,
    pub failed_tests: Vec<String>,
}

impl TestOutcome {
    pub fn passed() -> Self {
        TestOutcome {
            passed: true,
            failed_tests: Vec::new(),
        }
    }

    /// `names` must not be empty.
    pub fn failed(names: Vec<String>) -> Self {
        debug_assert!(!names.is_empty());
        TestOutcome {
            passed: false,
            failed_tests: names,
        }
    }
}

/// Source of per-worker sessions against the system under test.
pub trait Evaluator: Sync {
    fn session(&self, worker: usize) -> Result<Box<dyn Session + '_>>;
}

/// One worker's connection to its own instance of the system.
pub trait Session {
    fn apply(&mut self, rules: &BTreeSet<RuleId>) -> Result<()>;
    fn test(&mut self) -> Result<TestOutcome>;
    fn revert(&mut self, rules: &BTreeSet<RuleId>) -> Result<()>;
    /// Rebuilds the instance from scratch (hard reset).
    fn recreate(&mut self) -> Result<()>;
    /// Rules from `rules` that are not in effect, if compliance can be checked.
    fn noncompliant(&mut self, rules: &BTreeSet<RuleId>) -> Result<Option<BTreeSet<RuleId>>>;
}

#[derive(Debug, Clone)]
pub enum EvaluatorConfig {
    Simulated(BreakingSetDnf),
    External(ExternalConfig),
}

impl EvaluatorConfig {
    pub fn build(&self) -> Result<Box<dyn Evaluator>> {
        Ok(match self {
            EvaluatorConfig::Simulated(dnf) => Box::new(SimulatedEvaluator::new(dnf.clone())),
            EvaluatorConfig::External(cfg) => Box::new(ExternalEvaluator::new(cfg.clone())?),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetPolicy {
    /// Revert the applied rules in place.
    #[default]
    Soft,
    /// Recreate the instance between tuples.
    Hard,
}

/// Contiguous, near-equal blocks of tuples per worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerPlan {
    n_workers: usize,
    assignment: Vec<usize>,
}

impl WorkerPlan {
    pub fn uniform(n_tuples: usize, n_workers: usize) -> Result<Self> {
        if n_workers == 0 {
            return Err(Error::Validation("at least one worker is required".into()));
        }
        let base = n_tuples / n_workers;
        let extra = n_tuples % n_workers;
        let mut assignment = Vec::with_capacity(n_tuples);
        for w in 0..n_workers {
            let size = base + usize::from(w < extra);
            assignment.extend(std::iter::repeat(w).take(size));
        }
        Ok(WorkerPlan {
            n_workers,
            assignment,
        })
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    /// Worker id of every tuple index.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn tuples_of(&self, worker: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == worker)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub baseline_passed: bool,
    pub full_guide_passed: bool,
    pub revert_ok: bool,
    pub noncompliant_rules: Option<BTreeSet<RuleId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub reset: ResetPolicy,
    /// Extra attempts for an apply or test command that errors.
    pub retries: u32,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            reset: ResetPolicy::Soft,
            retries: 0,
        }
    }
}

fn retry<T>(retries: u32, mut f: impl FnMut() -> Result<T>) -> Result<T> {
    let mut attempt = 0;
    loop {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if attempt < retries => {
                attempt += 1;
                tracing::warn!(error = %e, attempt, "retrying command");
            }
            Err(e) => return Err(e),
        }
    }
}

fn record(stage: Stage, applied: BTreeSet<RuleId>, outcome: TestOutcome) -> RunRecord {
    RunRecord {
        tuple_index: 0,
        applied,
        passed: outcome.passed,
        failed_tests: outcome.failed_tests,
        stage,
    }
}

/// Tests with no rules applied.
pub fn run_baseline(evaluator: &dyn Evaluator) -> Result<RunRecord> {
    let mut session = evaluator.session(0)?;
    let outcome = session.test()?;
    Ok(record(Stage::Baseline, BTreeSet::new(), outcome))
}

/// Applies the whole guide and tests. Also returns the rules the compliance
/// check reports as not in effect, when available.
pub fn run_full_guide(
    evaluator: &dyn Evaluator,
    guide: &Guide,
) -> Result<(RunRecord, Option<BTreeSet<RuleId>>)> {
    let all: BTreeSet<RuleId> = guide.rules().iter().cloned().collect();
    let mut session = evaluator.session(0)?;
    session.apply(&all)?;
    let noncompliant = session.noncompliant(&all)?;
    let outcome = session.test()?;
    Ok((record(Stage::FullGuide, all, outcome), noncompliant))
}

/// Reverts the whole guide and checks the tests pass again.
pub fn run_revert_check(evaluator: &dyn Evaluator, guide: &Guide) -> Result<RunRecord> {
    let all: BTreeSet<RuleId> = guide.rules().iter().cloned().collect();
    let mut session = evaluator.session(0)?;
    session.revert(&all)?;
    let outcome = session.test()?;
    Ok(record(Stage::RevertCheck, BTreeSet::new(), outcome))
}

enum Slot {
    Tested(RunRecord),
    Untested(UntestedTuple),
}

/// Index-keyed result store shared by the workers. A second result for the
/// same index is an error.
struct Sink {
    slots: Mutex<(BTreeMap<usize, Slot>, Option<BufWriter<File>>)>,
}

impl Sink {
    fn new(journal: Option<&Path>) -> Result<Self> {
        let writer = match journal {
            Some(path) => Some(BufWriter::new(
                File::create(path).map_err(|e| Error::io(path, e))?,
            )),
            None => None,
        };
        Ok(Sink {
            slots: Mutex::new((BTreeMap::new(), writer)),
        })
    }

    fn put(&self, index: usize, slot: Slot, journal: Option<&Path>) -> Result<()> {
        let mut guard = self.slots.lock().expect("sink lock poisoned");
        let (slots, writer) = &mut *guard;
        if slots.contains_key(&index) {
            return Err(Error::DuplicateResult(index));
        }
        if let Some(w) = writer.as_mut() {
            let line = match &slot {
                Slot::Tested(r) => serde_json::to_string(r),
                Slot::Untested(u) => serde_json::to_string(u),
            }
            .expect("records serialize");
            let path = journal.expect("journal path is set with the writer");
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))?;
        }
        slots.insert(index, slot);
        Ok(())
    }

    fn into_parts(self) -> (Vec<RunRecord>, Vec<UntestedTuple>) {
        let (slots, _) = self.slots.into_inner().expect("sink lock poisoned");
        let mut records = Vec::new();
        let mut untested = Vec::new();
        for (_, slot) in slots {
            match slot {
                Slot::Tested(r) => records.push(r),
                Slot::Untested(u) => untested.push(u),
            }
        }
        (records, untested)
    }
}

/// Runs every array row once. Each worker handles its block in order; a
/// tuple whose commands fail is reported as untested. When `journal` is set,
/// every finished tuple is appended to it as one JSON line.
pub fn run_tuples(
    evaluator: &dyn Evaluator,
    guide: &Guide,
    array: &CoveringArray,
    plan: &WorkerPlan,
    options: RunOptions,
    journal: Option<&Path>,
) -> Result<ResultSet> {
    array.check_matches(guide)?;
    if plan.assignment().len() != array.num_rows() {
        return Err(Error::LengthMismatch {
            expected: array.num_rows(),
            actual: plan.assignment().len(),
        });
    }
    if array.num_rows() == 0 {
        tracing::warn!("covering array has no rows; nothing to run");
    }
    let sink = Sink::new(journal)?;
    let tuples: Vec<_> = array.tuples().collect();

    let worker_results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..plan.n_workers())
            .map(|w| {
                let block = plan.tuples_of(w);
                let tuples = &tuples;
                let sink = &sink;
                scope.spawn(move || -> Result<()> {
                    if block.is_empty() {
                        return Ok(());
                    }
                    let mut session = evaluator.session(w)?;
                    let mut broken_env: Option<String> = None;
                    for i in block {
                        let applied = guide.tuple_to_applied(&tuples[i])?;
                        if let Some(reason) = &broken_env {
                            sink.put(
                                i,
                                Slot::Untested(UntestedTuple {
                                    tuple_index: i,
                                    applied,
                                    error: reason.clone(),
                                }),
                                journal,
                            )?;
                            continue;
                        }
                        let slot = match evaluate_one(session.as_mut(), &applied, options) {
                            Ok(outcome) => Slot::Tested(RunRecord {
                                tuple_index: i,
                                applied: applied.clone(),
                                passed: outcome.passed,
                                failed_tests: outcome.failed_tests,
                                stage: Stage::Tuple,
                            }),
                            Err(e) => Slot::Untested(UntestedTuple {
                                tuple_index: i,
                                applied: applied.clone(),
                                error: e.to_string(),
                            }),
                        };
                        sink.put(i, slot, journal)?;
                        if let Err(e) = reset(session.as_mut(), &applied, options) {
                            tracing::error!(worker = w, error = %e, "reset failed; remaining tuples of this worker are untested");
                            broken_env = Some(format!("worker {w} could not be reset: {e}"));
                        }
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    for r in worker_results {
        r?;
    }

    let (records, untested) = sink.into_parts();
    if !untested.is_empty() {
        tracing::warn!(count = untested.len(), "some tuples could not be evaluated");
    }
    Ok(ResultSet {
        guide_id: guide.id().to_string(),
        strength: Some(array.strength().get()),
        algorithm_tag: Some(array.algorithm_tag().to_string()),
        records,
        untested,
    })
}

fn evaluate_one(session: &mut dyn Session, applied: &BTreeSet<RuleId>, options: RunOptions) -> Result<TestOutcome> {
    retry(options.retries, || session.apply(applied))?;
    retry(options.retries, || session.test())
}

fn reset(session: &mut dyn Session, applied: &BTreeSet<RuleId>, options: RunOptions) -> Result<()> {
    match options.reset {
        ResetPolicy::Soft => retry(options.retries, || session.revert(applied)),
        ResetPolicy::Hard => retry(options.retries, || session.recreate()),
    }
}

/// Outcome of the whole procedure.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: BaselineReport,
    /// Stage records first, then tuple records in index order.
    pub results: ResultSet,
    /// Set when the full guide already passes: nothing needs excluding.
    pub short_circuit: Option<Solution>,
}

impl PipelineOutcome {
    /// 0 on success, 4 when tuples remain untested.
    pub fn exit_code(&self) -> i32 {
        if self.results.untested.is_empty() {
            0
        } else {
            4
        }
    }
}

/// Baseline, full guide, revert check, then all tuples. A failing baseline
/// or revert check aborts with [`Error::BaselineFailed`] or
/// [`Error::RevertFailed`].
pub fn run_pipeline(
    evaluator: &dyn Evaluator,
    guide: &Guide,
    array: &CoveringArray,
    n_workers: usize,
    options: RunOptions,
    journal: Option<&Path>,
) -> Result<PipelineOutcome> {
    let mut report = BaselineReport::default();
    let mut stage_records = Vec::new();

    let baseline = run_baseline(evaluator)?;
    report.baseline_passed = baseline.passed;
    stage_records.push(baseline);
    if !report.baseline_passed {
        return Err(Error::BaselineFailed);
    }

    let (full, noncompliant) = run_full_guide(evaluator, guide)?;
    report.full_guide_passed = full.passed;
    report.noncompliant_rules = noncompliant;
    stage_records.push(full);

    if report.full_guide_passed {
        report.revert_ok = true;
        let mut solution = Solution::unverified(crate::model::Strategy::LogicMin, BTreeSet::new());
        solution.verified_non_breaking = Verdict::True;
        solution.verified_maximal = Verdict::True;
        let mut results = ResultSet::new(guide.id());
        results.strength = Some(array.strength().get());
        results.algorithm_tag = Some(array.algorithm_tag().to_string());
        results.records = stage_records;
        return Ok(PipelineOutcome {
            report,
            results,
            short_circuit: Some(solution),
        });
    }

    match options.reset {
        ResetPolicy::Soft => {
            let revert = run_revert_check(evaluator, guide)?;
            report.revert_ok = revert.passed;
            stage_records.push(revert);
            if !report.revert_ok {
                return Err(Error::RevertFailed);
            }
        }
        ResetPolicy::Hard => {
            evaluator.session(0)?.recreate()?;
            report.revert_ok = true;
        }
    }

    let plan = WorkerPlan::uniform(array.num_rows(), n_workers)?;
    let mut results = run_tuples(evaluator, guide, array, &plan, options, journal)?;
    stage_records.append(&mut results.records);
    results.records = stage_records;
    Ok(PipelineOutcome {
        report,
        results,
        short_circuit: None,
    })
}

/// Applies exactly the candidate set `G \ excluded`, tests once and reverts.
/// Returns whether the tests passed.
pub fn confirm_solution(evaluator: &dyn Evaluator, guide: &Guide, solution: &Solution) -> Result<bool> {
    solution.validate_against(guide)?;
    let candidate: BTreeSet<RuleId> = solution.candidate(guide).into_iter().collect();
    let mut session = evaluator.session(0)?;
    session.apply(&candidate)?;
    let outcome = session.test()?;
    session.revert(&candidate)?;
    Ok(outcome.passed)
}

/// Tuple results of a simulated run, without the stage records.
pub fn simulate_tuples(dnf: &BreakingSetDnf, guide: &Guide, array: &CoveringArray) -> Result<ResultSet> {
    let evaluator = SimulatedEvaluator::new(dnf.clone());
    let plan = WorkerPlan::uniform(array.num_rows(), 1)?;
    run_tuples(&evaluator, guide, array, &plan, RunOptions::default(), None)
}
