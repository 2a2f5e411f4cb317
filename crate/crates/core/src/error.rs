use thiserror::Error;

/// Errors raised anywhere in the reduction / integration pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DaeError {
    /// A smooth construction hit a point where it is not defined (zero
    /// divisor, non-positive radicand, singular block).
    #[error("singular point of smooth construction: {0}")]
    Singular(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Taylor order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    /// Rank deficiency at the reference point of a frozen factorization.
    #[error("rank deficient at reference point ({0}); choose a smaller window or re-reduce")]
    RankDeficient(String),

    /// Cholesky pivot lost positivity.
    #[error("matrix left its definiteness neighborhood: {0}")]
    NotPositiveDefinite(String),

    #[error("inertia mismatch: expected ({expected_p}, {expected_q}), found ({found_p}, {found_q})")]
    InertiaMismatch {
        expected_p: usize,
        expected_q: usize,
        found_p: usize,
        found_q: usize,
    },

    #[error("input is not {0} to tolerance")]
    NotStructured(&'static str),

    #[error("coefficient provider cannot supply order {requested} (max {available})")]
    ProviderOrder { requested: usize, available: usize },

    #[error("no level mu <= {0} satisfies the regularity hypothesis")]
    NonRegular(usize),

    #[error("characteristic values change across the sample grid: {0}")]
    NonConstantRank(String),

    #[error("solvability condition violated: {0}")]
    Solvability(String),

    #[error("version requires a {required} problem")]
    SymmetryMismatch { required: &'static str },

    #[error("Gauss-Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Jacobian lost full row rank at an iterate (smallest pivot {0:e})")]
    JacobianRankDeficient(f64),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DaeError>;
