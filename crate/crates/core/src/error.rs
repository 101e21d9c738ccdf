use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the map being evaluated.
    #[error("{what} = {value} is outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    /// The reproducing-kernel inner product is only available for H >= 1/2.
    #[error("Hurst index {0} is not supported here (requires 1/2 <= H < 1)")]
    UnsupportedHurst(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("circulant embedding is not nonnegative definite (min eigenvalue {min_eigenvalue:e}) and the dense fallback failed")]
    EmbeddingFailed { min_eigenvalue: f64 },

    #[error("root finding did not converge after {iterations} iterations (residual {residual:e})")]
    RootNotConverged { iterations: usize, residual: f64 },

    #[error("implicit step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("pullback did not converge within depth {depth} (last gap {gap:e})")]
    PullbackNotConverged { depth: usize, gap: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("kernel weight mass vanishes at every grid node")]
    EmptyNeighborhood,

    #[error("nonpositive g = {value} at y = {y}")]
    NonPositiveG { y: f64, value: f64 },

    #[error("internal numerical error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            domain,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
