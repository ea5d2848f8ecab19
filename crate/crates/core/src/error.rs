use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate grid")]
    DegenerateGrid,
    #[error("non-finite path value at row {row}, component {comp}")]
    NonFinite { row: usize, comp: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("exponent window empty: need {lower} < alpha < {upper}, got {alpha}")]
    EmptyExponentWindow { lower: f64, upper: f64, alpha: f64 },
    #[error("covariance factorization failed")]
    CovarianceFactorization,
    #[error("solution blow-up at step {step}")]
    BlowUp { step: usize },
    #[error("grid too coarse for epsilon: step/epsilon = {ratio:.4e} exceeds {limit:.4e}")]
    GridTooCoarse { ratio: f64, limit: f64 },
    #[error("Delta = {delta} is not a multiple of the grid step {step}")]
    NotGridAligned { delta: f64, step: f64 },
    #[error("dissipativity violated: a(x) = {0}")]
    DissipativityViolated(f64),
    #[error("unreachable target")]
    UnreachableTarget,
    #[error("control budget exceeded: {cost} > {budget}")]
    BudgetExceeded { cost: f64, budget: f64 },
}
