//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // graph layer
    #[error("cycle detected through node `{0}`")]
    CycleDetected(String),
    #[error("counterfactual node `{counterfactual}` is a descendant of `{ancestor}`")]
    CounterfactualDownstreamOfMissingness { counterfactual: String, ancestor: String },
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("proxy `{0}` must have exactly one counterfactual and one missingness parent")]
    BadProxyParents(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node sets overlap at `{0}`")]
    OverlappingSets(String),
    #[error("cannot split proxy node `{0}`")]
    SplitOnProxy(String),
    #[error("fixed intervention node `{0}` cannot be queried")]
    FixedNodeInQuery(String),

    // probability tables
    #[error("factor for `{0}` references a variable not defined earlier")]
    BadTopologicalOrder(String),
    #[error("factor for `{variable}` is not normalized in row {row}")]
    UnnormalizedFactor { variable: String, row: usize },
    #[error("event has zero probability: {0}")]
    ZeroProbabilityEvent(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown label `{label}` for variable `{variable}`")]
    UnknownLabel { variable: String, label: String },
    #[error("laws do not share variables and supports")]
    SupportMismatch,
    #[error("mixing weight {0} outside [0, 1]")]
    EpsilonOutOfRange(f64),
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("table has {0} cells, above the size guard")]
    TableTooLarge(usize),

    // identification and estimation
    #[error("positivity violation: {0}")]
    PositivityViolation(String),
    #[error("outcome support is not {{0, 1}}")]
    NotBinaryOutcome,
    #[error("degenerate odds: {0}")]
    DegenerateOdds(String),
    #[error("zero density: {0}")]
    ZeroDensity(String),
    #[error("outcome label `{0}` is not numeric")]
    NonNumericOutcome(String),
    #[error("empty stratum in `{nuisance}` at cell `{cell}`")]
    EmptyStratum { nuisance: String, cell: String },
    #[error("value out of range: {0}")]
    RangeViolation(String),
    #[error("fold too small: {0}")]
    FoldTooSmall(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // input parsing
    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code, printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::CycleDetected(_) => "CYCLE_DETECTED",
            Error::CounterfactualDownstreamOfMissingness { .. } => {
                "COUNTERFACTUAL_DOWNSTREAM_OF_MISSINGNESS"
            }
            Error::DuplicateName(_) => "DUPLICATE_NAME",
            Error::BadProxyParents(_) => "BAD_PROXY_PARENTS",
            Error::UnknownNode(_) => "UNKNOWN_NODE",
            Error::OverlappingSets(_) => "OVERLAPPING_SETS",
            Error::SplitOnProxy(_) => "SPLIT_ON_PROXY",
            Error::FixedNodeInQuery(_) => "FIXED_NODE_IN_QUERY",
            Error::BadTopologicalOrder(_) => "BAD_TOPOLOGICAL_ORDER",
            Error::UnnormalizedFactor { .. } => "UNNORMALIZED_FACTOR",
            Error::ZeroProbabilityEvent(_) => "ZERO_PROBABILITY_EVENT",
            Error::UnknownVariable(_) => "UNKNOWN_VARIABLE",
            Error::UnknownLabel { .. } => "UNKNOWN_LABEL",
            Error::SupportMismatch => "SUPPORT_MISMATCH",
            Error::EpsilonOutOfRange(_) => "EPSILON_OUT_OF_RANGE",
            Error::InvalidLaw(_) => "INVALID_LAW",
            Error::TableTooLarge(_) => "TABLE_TOO_LARGE",
            Error::PositivityViolation(_) => "POSITIVITY_VIOLATION",
            Error::NotBinaryOutcome => "NOT_BINARY_OUTCOME",
            Error::DegenerateOdds(_) => "DEGENERATE_ODDS",
            Error::ZeroDensity(_) => "ZERO_DENSITY",
            Error::NonNumericOutcome(_) => "NON_NUMERIC_OUTCOME",
            Error::EmptyStratum { .. } => "EMPTY_STRATUM",
            Error::RangeViolation(_) => "RANGE_VIOLATION",
            Error::FoldTooSmall(_) => "FOLD_TOO_SMALL",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Io(_) => "IO_ERROR",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}
