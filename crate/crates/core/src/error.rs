//! Error type shared by the whole crate.
//!
//! Every failure path carries a stable machine-readable code (see
//! [`Error::code`]); the CLI prints errors as `error[CODE]: message` and maps
//! parse/usage failures to exit status 2 and everything else to 1.

use thiserror::Error;

use crate::spn::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Diagnostic raised while reading a text document; `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse {
        line: usize,
        code: &'static str,
        message: String,
    },

    #[error("node {0} is a product with inconsistent children (a variable takes different values under different children)")]
    InconsistentProduct(NodeId),

    #[error("node {0} is a product with overlapping child scopes")]
    NondecomposableProduct(NodeId),

    #[error("the SPN is not complete: sum node {0} has children with differing scopes")]
    IncompleteSum(NodeId),

    #[error("the SPN is not in normal form ({0}); run the normalizer first")]
    NotNormal(String),

    #[error("sum node {0} has zero total mass; its normalized weights are undefined")]
    DegenerateSum(NodeId),

    #[error("the partition function is zero; the encoded distribution is undefined")]
    DegenerateDistribution,

    #[error("enumeration over {needed} states exceeds the cap of {cap}")]
    EnumerationCap { needed: usize, cap: usize },

    #[error("no indicator input for variable {variable} value {value}")]
    MissingIndicator { variable: String, value: usize },

    #[error("assignment does not cover variable {0}")]
    IncompleteAssignment(String),

    #[error("value {value} is out of range for variable {variable}")]
    ValueOutOfRange { variable: String, value: usize },

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("unknown hidden variable H_{0}")]
    UnknownHidden(NodeId),

    #[error("decision-diagram variable orders disagree; operands must come from the same source network")]
    OrderViolation,

    #[error("hidden variable H_{0} occurs more than once in a factor; the elimination order is unsupported")]
    DuplicateHiddenOccurrence(NodeId),

    #[error("hidden variable H_{0} appears in no factor")]
    FactorlessHidden(NodeId),

    #[error("symbolic diagram still contains hidden variable H_{0}")]
    ResidualHidden(NodeId),

    #[error("branch count {got} does not match domain size {expected}")]
    DomainMismatch { expected: usize, got: usize },

    #[error("infeasible generator configuration: {0}")]
    InfeasibleConfig(String),

    #[error("models are limited to {0} variables")]
    TooManyVariables(usize),

    #[error("the graph has no root")]
    MissingRoot,

    #[error("cycle detected through node {0}")]
    Cycle(NodeId),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, unique per failure path.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { code, .. } => code,
            Error::InconsistentProduct(_) => "inconsistent-product",
            Error::NondecomposableProduct(_) => "nondecomposable-product",
            Error::IncompleteSum(_) => "incomplete-sum",
            Error::NotNormal(_) => "not-normal",
            Error::DegenerateSum(_) => "degenerate-sum",
            Error::DegenerateDistribution => "degenerate-distribution",
            Error::EnumerationCap { .. } => "enumeration-cap",
            Error::MissingIndicator { .. } => "missing-indicator",
            Error::IncompleteAssignment(_) => "incomplete-assignment",
            Error::ValueOutOfRange { .. } => "value-out-of-range",
            Error::UnknownVariable(_) => "unknown-variable",
            Error::UnknownNode(_) => "unknown-node",
            Error::UnknownHidden(_) => "unknown-hidden",
            Error::OrderViolation => "order-violation",
            Error::DuplicateHiddenOccurrence(_) => "duplicate-hidden-occurrence",
            Error::FactorlessHidden(_) => "factorless-hidden",
            Error::ResidualHidden(_) => "residual-hidden",
            Error::DomainMismatch { .. } => "domain-mismatch",
            Error::InfeasibleConfig(_) => "infeasible-config",
            Error::TooManyVariables(_) => "too-many-variables",
            Error::MissingRoot => "missing-root",
            Error::Cycle(_) => "cycle",
            Error::Io(_) => "io",
        }
    }

    /// True for failures of reading input (CLI exit status 2).
    pub fn is_parse(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Io(_))
    }

    pub(crate) fn parse(line: usize, code: &'static str, message: impl Into<String>) -> Error {
        Error::Parse {
            line,
            code,
            message: message.into(),
        }
    }
}
