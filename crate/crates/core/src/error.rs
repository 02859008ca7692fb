use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(
        "covariance is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e}, jitter tried up to {max_jitter:.3e})"
    )]
    NotPositiveSemiDefinite { min_eigenvalue: f64, max_jitter: f64 },

    #[error("correlation r = {r} is infeasible on these grids (largest feasible |r| is {max_abs_r:.4}); raise the grid's smallest time")]
    InfeasibleCorrelation { r: f64, max_abs_r: f64 },

    #[error("circulant embedding and Cholesky fallback both failed: {0}")]
    EmbeddingFailed(String),

    #[error("exponent {exponent:.1} exceeds overflow guard; reduce the window or grid step")]
    OverflowGuard { exponent: f64 },

    #[error("Pickands constant required for alpha = {alpha} < 1")]
    MissingPickands { alpha: f64 },

    #[error("numerical minimizer {found:?} deviates from (1, 1)")]
    MinimizerMismatch { found: (f64, f64) },

    #[error("sigma^2 forms disagree: {general} vs {reduced}")]
    InternalMismatch { general: f64, reduced: f64 },

    #[error("threshold u = {u} is below the centering constant mu = {mu}")]
    ThresholdBelowMu { u: f64, mu: f64 },

    #[error("local window hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("acceptance rate {rate:.3e} below 1e-6 over a probe batch of {probe}")]
    Timeout { rate: f64, probe: u64 },

    #[error("no exceedances of the second supremum in {n} replications")]
    DegenerateDenominator { n: u64 },

    #[error("invalid probability space: {0}")]
    InvalidSpace(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
