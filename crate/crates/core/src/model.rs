//! Shared data model: guides, rule tuples, run results and solutions, plus
//! their JSON file formats.
//!
//! Every downstream module indexes rules by their position in
//! [`Guide::rules`]; that order is fixed when the guide is loaded.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a single hardening rule, e.g. `R1_1_4`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RuleId(String);

impl RuleId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::InvalidRuleId(id));
        }
        Ok(RuleId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RuleId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        RuleId::new(value)
    }
}

impl From<RuleId> for String {
    fn from(value: RuleId) -> Self {
        value.0
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleId::new(s)
    }
}

/// An ordered hardening guide. Rule order defines column order everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GuideFile", into = "GuideFile")]
pub struct Guide {
    guide_id: String,
    rules: Vec<RuleId>,
    positions: HashMap<RuleId, usize>,
}

#[derive(Serialize, Deserialize)]
struct GuideFile {
    guide_id: String,
    rules: Vec<RuleId>,
}

impl TryFrom<GuideFile> for Guide {
    type Error = Error;

    fn try_from(file: GuideFile) -> Result<Self> {
        Guide::new(file.guide_id, file.rules)
    }
}

impl From<Guide> for GuideFile {
    fn from(guide: Guide) -> Self {
        GuideFile {
            guide_id: guide.guide_id,
            rules: guide.rules,
        }
    }
}

impl Guide {
    pub fn new(guide_id: impl Into<String>, rules: Vec<RuleId>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            if positions.insert(rule.clone(), i).is_some() {
                return Err(Error::DuplicateRule(rule.clone()));
            }
        }
        Ok(Guide {
            guide_id: guide_id.into(),
            rules,
            positions,
        })
    }

    /// Builds a guide from string ids, validating each one.
    pub fn from_ids<I, S>(guide_id: impl Into<String>, ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let rules = ids.into_iter().map(RuleId::new).collect::<Result<Vec<_>>>()?;
        Guide::new(guide_id, rules)
    }

    /// A synthetic guide `R0 .. R{n-1}`; handy for tests and studies.
    pub fn synthetic(guide_id: impl Into<String>, n: usize) -> Self {
        Guide::from_ids(guide_id, (0..n).map(|i| format!("R{i}"))).expect("synthetic ids are valid")
    }

    pub fn id(&self) -> &str {
        &self.guide_id
    }

    pub fn rules(&self) -> &[RuleId] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn position(&self, rule: &RuleId) -> Option<usize> {
        self.positions.get(rule).copied()
    }

    pub fn contains(&self, rule: &RuleId) -> bool {
        self.positions.contains_key(rule)
    }

    /// Rules at the positions where `selection` is true.
    pub fn tuple_to_applied(&self, tuple: &RuleTuple) -> Result<BTreeSet<RuleId>> {
        self.selection_to_applied(&tuple.selection)
    }

    pub fn selection_to_applied(&self, selection: &[bool]) -> Result<BTreeSet<RuleId>> {
        if selection.len() != self.rules.len() {
            return Err(Error::LengthMismatch {
                expected: self.rules.len(),
                actual: selection.len(),
            });
        }
        Ok(self
            .rules
            .iter()
            .zip(selection)
            .filter(|(_, &on)| on)
            .map(|(r, _)| r.clone())
            .collect())
    }

    /// Inverse of [`Guide::selection_to_applied`]. Unknown rules are an error.
    pub fn applied_to_selection<'a>(
        &self,
        applied: impl IntoIterator<Item = &'a RuleId>,
    ) -> Result<Vec<bool>> {
        let mut selection = vec![false; self.rules.len()];
        for rule in applied {
            let pos = self.position(rule).ok_or_else(|| Error::UnknownRule(rule.clone()))?;
            selection[pos] = true;
        }
        Ok(selection)
    }
}

/// One covering-array row viewed as the set of rules to apply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTuple {
    pub index: usize,
    pub selection: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Baseline,
    FullGuide,
    RevertCheck,
    Tuple,
}

/// Outcome of running the tests once with a given set of rules applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tuple_index: usize,
    pub applied: BTreeSet<RuleId>,
    pub passed: bool,
    pub failed_tests: Vec<String>,
    pub stage: Stage,
}

impl RunRecord {
    pub fn validate(&self) -> Result<()> {
        if self.passed != self.failed_tests.is_empty() {
            return Err(Error::Validation(format!(
                "record for tuple {} ({:?}) has passed={} but {} failing test(s)",
                self.tuple_index,
                self.stage,
                self.passed,
                self.failed_tests.len()
            )));
        }
        Ok(())
    }
}

/// A tuple that could not be evaluated because the evaluator itself failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UntestedTuple {
    pub tuple_index: usize,
    pub applied: BTreeSet<RuleId>,
    pub error: String,
}

/// Merged results of one testing run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResultSet {
    pub guide_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm_tag: Option<String>,
    pub records: Vec<RunRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub untested: Vec<UntestedTuple>,
}

impl ResultSet {
    pub fn new(guide_id: impl Into<String>) -> Self {
        ResultSet {
            guide_id: guide_id.into(),
            ..Default::default()
        }
    }

    /// Tuple-stage records in file order.
    pub fn tuple_records(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| r.stage == Stage::Tuple)
    }

    pub fn stage_record(&self, stage: Stage) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.stage == stage)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for record in &self.records {
            record.validate()?;
            if record.stage == Stage::Tuple && !seen.insert(record.tuple_index) {
                return Err(Error::DuplicateResult(record.tuple_index));
            }
        }
        for untested in &self.untested {
            if !seen.insert(untested.tuple_index) {
                return Err(Error::DuplicateResult(untested.tuple_index));
            }
        }
        Ok(())
    }

    /// Checks the guide id and that every applied rule belongs to `guide`.
    pub fn validate_against(&self, guide: &Guide) -> Result<()> {
        self.validate()?;
        if self.guide_id != guide.id() {
            return Err(Error::Validation(format!(
                "results belong to guide {:?}, not {:?}",
                self.guide_id,
                guide.id()
            )));
        }
        let applied = self
            .records
            .iter()
            .flat_map(|r| &r.applied)
            .chain(self.untested.iter().flat_map(|u| &u.applied));
        for rule in applied {
            if !guide.contains(rule) {
                return Err(Error::UnknownRule(rule.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    DtreeShortestPath,
    DtreeMaxPartition,
    LogicMin,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::DtreeShortestPath,
        Strategy::DtreeMaxPartition,
        Strategy::LogicMin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::DtreeShortestPath => "dtree_shortest_path",
            Strategy::DtreeMaxPartition => "dtree_max_partition",
            Strategy::LogicMin => "logic_min",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tri-state verification flag; serialized as `true`, `false` or `null`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Option<bool>", into = "Option<bool>")]
pub enum Verdict {
    True,
    False,
    #[default]
    Unknown,
}

impl From<Option<bool>> for Verdict {
    fn from(v: Option<bool>) -> Self {
        match v {
            Some(true) => Verdict::True,
            Some(false) => Verdict::False,
            None => Verdict::Unknown,
        }
    }
}

impl From<Verdict> for Option<bool> {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::True => Some(true),
            Verdict::False => Some(false),
            Verdict::Unknown => None,
        }
    }
}

impl From<bool> for Verdict {
    fn from(v: bool) -> Self {
        if v {
            Verdict::True
        } else {
            Verdict::False
        }
    }
}

/// Rules to leave out; the candidate hardening set is the guide minus `excluded`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub strategy: Strategy,
    pub excluded: BTreeSet<RuleId>,
    pub verified_non_breaking: Verdict,
    pub verified_maximal: Verdict,
}

impl Solution {
    pub fn unverified(strategy: Strategy, excluded: BTreeSet<RuleId>) -> Self {
        Solution {
            strategy,
            excluded,
            verified_non_breaking: Verdict::Unknown,
            verified_maximal: Verdict::Unknown,
        }
    }

    /// The candidate set: guide rules not excluded, in guide order.
    pub fn candidate(&self, guide: &Guide) -> Vec<RuleId> {
        guide
            .rules()
            .iter()
            .filter(|r| !self.excluded.contains(*r))
            .cloned()
            .collect()
    }

    pub fn validate_against(&self, guide: &Guide) -> Result<()> {
        match self.excluded.iter().find(|r| !guide.contains(r)) {
            Some(r) => Err(Error::UnknownRule(r.clone())),
            None => Ok(()),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// Pretty JSON with a trailing newline; byte-stable for equal values.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("model types always serialize");
    text.push('\n');
    text
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)).map_err(|e| Error::io(path, e))
}

pub fn load_guide(path: &Path) -> Result<Guide> {
    read_json(path)
}

pub fn save_guide(path: &Path, guide: &Guide) -> Result<()> {
    write_json(path, guide)
}

pub fn load_results(path: &Path) -> Result<ResultSet> {
    let results: ResultSet = read_json(path)?;
    results.validate()?;
    Ok(results)
}

pub fn save_results(path: &Path, results: &ResultSet) -> Result<()> {
    write_json(path, results)
}

pub fn load_solution(path: &Path) -> Result<Solution> {
    read_json(path)
}

pub fn save_solution(path: &Path, solution: &Solution) -> Result<()> {
    write_json(path, solution)
}
