use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("negative time t = {0}")]
    NegativeTime(f64),

    #[error("vector has length {got}, operator has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mode index {index} out of range 1..={dim}")]
    ModeOutOfRange { index: usize, dim: usize },

    #[error("mesh exponent m = {m} is below radius exponent r = {r}")]
    MeshBelowRadius { m: u32, r: u32 },

    #[error("lattice would contain {predicted:.3e} points, budget is {budget}")]
    BudgetExceeded { predicted: f64, budget: u64 },

    #[error("point lies outside the set: component {component} (1-based) violates its bound")]
    OutsideSet { component: usize },

    #[error("time grid does not resolve {0}")]
    UnresolvedGrid(String),

    #[error("dyadic interval overflow: k + r = {end} exceeds 2^n - 1 = {max}")]
    IntervalOverflow { end: u64, max: u64 },

    #[error("chain length r = {r} exceeds 2^(n/4) = {limit:.3}; pass the override to allow it")]
    ChainTooLong { r: usize, limit: f64 },

    #[error("Gronwall growth constant K = {0} must be nonnegative")]
    GronwallNegativeK(f64),

    #[error("Gronwall level too small: K = {k} exceeds ln(2) 2^m = {limit} for m = {m}")]
    GronwallLevelTooSmall { k: f64, m: u32, limit: f64 },

    #[error("Gronwall start value beta0 = {0} must lie in (0, 1)")]
    GronwallBetaOutOfRange(f64),

    #[error("Gronwall step count {steps} exceeds 2^m = {max}")]
    GronwallTooManySteps { steps: u64, max: u64 },

    #[error("Gronwall sequence left (0, 1) at index {index} (beta = {value})")]
    GronwallEscaped { index: usize, value: f64 },

    #[error("increment family {0} carries no moment certificate for the requested constant")]
    Uncertified(String),

    #[error("empty sample")]
    EmptySample,
}
