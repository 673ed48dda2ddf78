use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cholesky breakdown while adding observation {index}")]
    CholeskyBreakdown { index: usize },

    #[error("objective is not finite at grid point {index} {point:?}")]
    NonFiniteObjective { index: usize, point: Vec<f64> },

    #[error("no candidate points to search")]
    EmptyCandidates,

    #[error("no feasible grid point")]
    Infeasible,

    #[error("point {point:?} lies outside the domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("round {round} outside the schedule horizon")]
    RoundOutOfRange { round: usize },

    #[error("unknown environment `{name}` (known: {known})")]
    UnknownEnvironment { name: String, known: String },

    #[error("rectified cost must be nonnegative, got {0}")]
    NegativeCost(f64),

    #[error("feedback for round {0} was not delivered")]
    MissingFeedback(usize),

    #[error("traces come from different configurations")]
    HeterogeneousTraces,

    #[error("round {round}: {source}")]
    AtRound { round: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_round(self, round: usize) -> Self {
        match self {
            e @ Error::AtRound { .. } => e,
            e => Error::AtRound {
                round,
                source: Box::new(e),
            },
        }
    }
}
