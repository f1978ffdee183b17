use std::path::PathBuf;

use crate::model::RuleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid rule id {0:?}: expected a non-empty token of alphanumerics and underscores")]
    InvalidRuleId(String),

    #[error("rule {0} appears more than once in the guide")]
    DuplicateRule(RuleId),

    #[error("rule {0} is not part of the guide")]
    UnknownRule(RuleId),

    #[error("selection has {actual} entries but the guide has {expected} rules")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("strength {0} is outside the supported range 2..=6")]
    InvalidStrength(usize),

    #[error("strength {strength} exceeds the number of rules ({rules})")]
    StrengthExceedsRules { strength: usize, rules: usize },

    #[error(
        "strength {strength} over {rules} rules needs about {estimate_mib} MiB of working memory; \
         pass --force to generate anyway"
    )]
    ResourceBound {
        strength: usize,
        rules: usize,
        estimate_mib: u64,
    },

    #[error("unknown parameter {0:?} in ACTS file")]
    UnknownParameter(String),

    #[error("guide rule {0} is missing from the ACTS file header")]
    MissingParameter(RuleId),

    #[error("line {line}: expected {expected} values, found {actual}")]
    ArityMismatch {
        line: usize,
        expected: usize,
        actual: usize,
    },

    #[error("line {line}: cannot read {token:?} as a boolean value")]
    BadValue { line: usize, token: String },

    #[error("{count} variables exceed the limit of {limit}; {hint}")]
    TooManyVariables {
        count: usize,
        limit: usize,
        hint: &'static str,
    },

    #[error("corpus cell with {clauses} clause(s) of {rules_per_clause} rule(s) needs more rules than the guide's {available}")]
    CorpusInfeasible {
        clauses: usize,
        rules_per_clause: usize,
        available: usize,
    },

    #[error("{phase} command timed out after {seconds}s")]
    CommandTimeout { phase: &'static str, seconds: u64 },

    #[error("{phase} command could not be run: {message}")]
    CommandFailed { phase: &'static str, message: String },

    #[error("baseline tests fail with no rules applied; fix the tests or the setup")]
    BaselineFailed,

    #[error("tests still fail after reverting all rules; there is a problem with the revert mechanism")]
    RevertFailed,

    #[error("duplicate result for tuple {0}")]
    DuplicateResult(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no non-breaking leaf: every tested combination broke")]
    NoNonBreakingLeaf,

    #[error("non-monotone breakage detected: an implicant has no applied rule, so excluding rules cannot fix it")]
    NonMonotone,

    #[error("the number of instances must be at least 1")]
    ZeroInstances,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
