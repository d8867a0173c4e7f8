use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the relation, symbolic, hyperbolicity, continuation and
/// map modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("negative radicand {radicand:e} at {at:e}")]
    NegativeRadicand { radicand: f64, at: f64 },

    #[error("degenerate branch: {0}")]
    DegenerateBranch(&'static str),

    #[error("branch label {label} not available: {reason}")]
    InvalidBranch {
        label: &'static str,
        reason: &'static str,
    },

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("no preimage of v = {v:e}")]
    NoPreimage { v: f64 },

    #[error("point not on relation: residual {residual:e} exceeds tolerance {tolerance:e}")]
    NotOnRelation { residual: f64, tolerance: f64 },

    #[error(
        "iterate left the trapping set at t = {index} (value {value:e}, iteration {iteration})"
    )]
    EscapedTrappingSet {
        index: usize,
        value: f64,
        iteration: usize,
    },

    #[error("iterate {value:e} left the domain [{lo:e}, {hi:e}]")]
    EscapedDomain { value: f64, lo: f64, hi: f64 },

    #[error("no convergence after {iterations} iterations (last change {last_change:e}, contraction {contraction:e})")]
    NoConvergence {
        iterations: usize,
        last_change: f64,
        contraction: f64,
    },

    #[error("orbit point {value:e} within {distance:e} of the critical point")]
    CriticalPointProximity { value: f64, distance: f64 },

    #[error("slope sequence contains an infinite, zero or undefined slope at t = {index}")]
    InfiniteOrZeroSlope { index: usize },

    #[error("state is not hyperbolic (certificate kind {kind})")]
    NotHyperbolic { kind: String },

    #[error("singular matrix (pivot ratio {pivot_ratio:e})")]
    SingularMatrix { pivot_ratio: f64 },

    #[error("singular Jacobian (pivot ratio {pivot_ratio:e})")]
    SingularJacobian { pivot_ratio: f64 },

    #[error("Newton update of sup-norm {norm:e} exceeds the cap {cap:e}")]
    StepTooLarge { norm: f64, cap: f64 },

    #[error("continuation step underflow at epsilon = {epsilon:e} (step {step:e})")]
    StepUnderflow { epsilon: f64, step: f64 },

    #[error("epsilon must be positive for projection")]
    ZeroEpsilon,

    #[error("degenerate elimination: {0}")]
    DegenerateElimination(String),

    #[error("map is not invertible: delta = 0")]
    ZeroDelta,

    #[error("orbit is not periodic: cyclic residual {residual:e} exceeds {tolerance:e}")]
    NotPeriodic { residual: f64, tolerance: f64 },

    #[error("period {period} exceeds the enumeration cap {cap}")]
    PeriodTooLarge { period: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("word {word}: {source}")]
    WordFailed { word: String, source: Box<Error> },
}

impl Error {
    /// Variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NegativeRadicand { .. } => "NegativeRadicand",
            Error::DegenerateBranch(_) => "DegenerateBranch",
            Error::InvalidBranch { .. } => "InvalidBranch",
            Error::DivisionByZero(_) => "DivisionByZero",
            Error::NoPreimage { .. } => "NoPreimage",
            Error::NotOnRelation { .. } => "NotOnRelation",
            Error::EscapedTrappingSet { .. } => "EscapedTrappingSet",
            Error::EscapedDomain { .. } => "EscapedDomain",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::CriticalPointProximity { .. } => "CriticalPointProximity",
            Error::InfiniteOrZeroSlope { .. } => "InfiniteOrZeroSlope",
            Error::NotHyperbolic { .. } => "NotHyperbolic",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::SingularJacobian { .. } => "SingularJacobian",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::StepUnderflow { .. } => "StepUnderflow",
            Error::ZeroEpsilon => "ZeroEpsilon",
            Error::DegenerateElimination(_) => "DegenerateElimination",
            Error::ZeroDelta => "ZeroDelta",
            Error::NotPeriodic { .. } => "NotPeriodic",
            Error::PeriodTooLarge { .. } => "PeriodTooLarge",
            Error::InvalidInput(_) => "InvalidInput",
            Error::WordFailed { source, .. } => source.name(),
        }
    }
}
