use serde::Serialize;
use thiserror::Error;

use crate::oracle::Query;
use crate::rational::Rational;

/// A rectangle of a criteria plane, normalized so that `a < b`.
///
/// `la` is the interval label on criterion `a`, `lb` the label on `b`
/// (1-based: interval `l` is `[x_{l-1}, x_l]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Rect {
    pub a: usize,
    pub la: usize,
    pub b: usize,
    pub lb: usize,
}

impl Rect {
    /// Rectangle for interval `li` of criterion `i` and `lj` of `j`, in either order.
    pub fn new(i: usize, li: usize, j: usize, lj: usize) -> Self {
        if i < j {
            Rect { a: i, la: li, b: j, lb: lj }
        } else {
            Rect { a: j, la: lj, b: i, lb: li }
        }
    }
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "R[c{}:{} x c{}:{}]", self.a, self.la, self.b, self.lb)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("value {value} outside the scale of criterion {criterion}")]
    OutOfScale { criterion: usize, value: Rational },

    #[error("models are defined on different grids")]
    GridMismatch,

    #[error("malformed query: {0}")]
    MalformedQuery(String),

    #[error("answer source is inconsistent with the model class: {0}")]
    OracleFailure(String),

    /// Raised by suspendable sources when the next answer is not known yet.
    #[error("waiting for answers to query {0}")]
    AwaitingAnswers(Box<Query>),

    #[error("replay diverged at query #{index}: expected {expected}, got {found}")]
    ReplayDivergence {
        index: usize,
        expected: Box<Query>,
        found: Box<Query>,
    },

    #[error("neighboring-rectangles probe did not settle within {0} queries")]
    IterationBudgetExceeded(usize),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("several answer assignments remain consistent with distinct slopes ({context})")]
    Degenerate { context: String },

    #[error("no answer assignment is consistent with the collected information ({context})")]
    NoConsistentAssignment { context: String },

    #[error("neighboring-rectangles coefficient phi is zero; the coupling carries no information")]
    PhiZero,

    #[error("no valid reference intervals to identify interval {interval} of criterion {criterion}")]
    NoValidReferencePair { criterion: usize, interval: usize },

    #[error("elicitation state is already initialized")]
    AlreadyInitialized,

    #[error("inconsistent information: {0}")]
    Inconsistent(String),

    /// An algebra failure annotated with where it happened.
    #[error("{source} while identifying interval {interval} of criterion {criterion} from {rects:?}")]
    AtTarget {
        criterion: usize,
        interval: usize,
        rects: Vec<Rect>,
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short machine-readable code for wire payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidModel(_) => "invalid_model",
            Error::OutOfScale { .. } => "out_of_scale",
            Error::GridMismatch => "grid_mismatch",
            Error::MalformedQuery(_) => "malformed_query",
            Error::OracleFailure(_) => "oracle_failure",
            Error::AwaitingAnswers(_) => "awaiting_answers",
            Error::ReplayDivergence { .. } => "replay_divergence",
            Error::IterationBudgetExceeded(_) => "iteration_budget_exceeded",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::Degenerate { .. } => "degenerate",
            Error::NoConsistentAssignment { .. } => "no_consistent_assignment",
            Error::PhiZero => "phi_zero",
            Error::NoValidReferencePair { .. } => "no_valid_reference_pair",
            Error::AlreadyInitialized => "already_initialized",
            Error::Inconsistent(_) => "inconsistent",
            Error::AtTarget { source, .. } => source.code(),
            Error::Parse(_) => "parse",
        }
    }

    /// The innermost error, with target annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTarget { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
