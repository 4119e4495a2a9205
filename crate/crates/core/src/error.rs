use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("distribution has no atoms")]
    EmptyDistribution,
    #[error("atom {index} has negative probability {prob}")]
    NegativeProbability { index: usize, prob: f64 },
    #[error("atom {index} is not finite (value {value}, prob {prob})")]
    NonFiniteAtom { index: usize, value: f64, prob: f64 },
    #[error("distribution has zero total mass")]
    ZeroMass,
    #[error("quantile {0} outside [0, 1]")]
    QuantileOutOfRange(f64),

    #[error("x = {x} outside curve domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("curve needs at least one breakpoint")]
    EmptyCurve,
    #[error("breakpoints not strictly increasing at index {0}")]
    NonIncreasingBreakpoints(usize),
    #[error("curve is not {expected} (slope {before} followed by {after})")]
    WrongShape {
        expected: &'static str,
        before: f64,
        after: f64,
    },
    #[error("slope {0} exceeds 1; optimality curve contract violated")]
    SlopeBound(f64),
    #[error("no input curves or points")]
    EmptyInput,
    #[error("weights must be positive and sum to at most 1 (got {0})")]
    BadWeights(f64),

    #[error("invalid input at {pointer}: {message}")]
    Invalid { pointer: String, message: String },
    #[error("state `{0}` is reachable from itself; MDPs must be acyclic")]
    Cycle(String),
    #[error("unrolled depth exceeds cap {0}")]
    DepthCap(usize),
    #[error("commitment has no entry for internal state `{0}`")]
    MissingCommitment(String),

    #[error("element {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("rank is only defined for matroid constraints")]
    NotMatroid,
    #[error("declared k = {k} is inconsistent with the family (ratio {ratio})")]
    KSystemViolated { k: usize, ratio: f64 },
    #[error("expected {expected} entries, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("linear program is {0}")]
    Lp(&'static str),

    #[error("{what} size {size} exceeds guard {limit}")]
    Guard {
        what: &'static str,
        size: u128,
        limit: u128,
    },
    #[error("policy halted with infeasible or non-terminal selection")]
    InfeasiblePlay,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{}", render_diagnostics(.0))]
    Diagnostics(Vec<crate::chains::Diagnostic>),
}

fn render_diagnostics(d: &[crate::chains::Diagnostic]) -> String {
    d.iter()
        .map(|d| format!("{}: {}", if d.pointer.is_empty() { "/" } else { &d.pointer }, d.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn invalid(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn is_guard(&self) -> bool {
        matches!(self, Error::Guard { .. })
    }
}

pub(crate) fn guard(what: &'static str, size: u128, limit: u128) -> Result<()> {
    if size > limit {
        Err(Error::Guard { what, size, limit })
    } else {
        Ok(())
    }
}
