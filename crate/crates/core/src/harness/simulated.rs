use std::collections::BTreeSet;

use super::{Evaluator, Session, TestOutcome};
use crate::error::Result;
use crate::model::RuleId;
use crate::oracle::{BreakingSetDnf, SIMULATED_TEST};

/// Evaluator whose "system" is a breaking-set formula. State is virtual, so
/// reverting always works.
#[derive(Debug, Clone)]
pub struct SimulatedEvaluator {
    dnf: BreakingSetDnf,
}

impl SimulatedEvaluator {
    pub fn new(dnf: BreakingSetDnf) -> Self {
        SimulatedEvaluator { dnf }
    }
}

struct SimulatedSession<'a> {
    dnf: &'a BreakingSetDnf,
    applied: BTreeSet<RuleId>,
}

impl Evaluator for SimulatedEvaluator {
    fn session(&self, _worker: usize) -> Result<Box<dyn Session + '_>> {
        Ok(Box::new(SimulatedSession {
            dnf: &self.dnf,
            applied: BTreeSet::new(),
        }))
    }
}

impl Session for SimulatedSession<'_> {
    fn apply(&mut self, rules: &BTreeSet<RuleId>) -> Result<()> {
        self.applied.extend(rules.iter().cloned());
        Ok(())
    }

    fn test(&mut self) -> Result<TestOutcome> {
        Ok(if self.dnf.is_breaking(&self.applied) {
            TestOutcome::failed(vec![SIMULATED_TEST.to_string()])
        } else {
            TestOutcome::passed()
        })
    }

    fn revert(&mut self, rules: &BTreeSet<RuleId>) -> Result<()> {
        self.applied.retain(|r| !rules.contains(r));
        Ok(())
    }

    fn recreate(&mut self) -> Result<()> {
        self.applied.clear();
        Ok(())
    }

    fn noncompliant(&mut self, _rules: &BTreeSet<RuleId>) -> Result<Option<BTreeSet<RuleId>>> {
        Ok(None)
    }
}
