use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Price violates the no-arbitrage bounds required for inversion.
    #[error("price {price} outside no-arbitrage bounds ({lower}, {upper})")]
    PriceOutOfBounds { price: f64, lower: f64, upper: f64 },

    /// The implied volatility lies outside the solver bracket.
    #[error("implied volatility outside [{min}, {max}] for price {price}")]
    VolOutOfBracket { price: f64, min: f64, max: f64 },

    #[error("implied volatility solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error(
        "correlation matrix is not positive semidefinite: leading minor of order {order} fails"
    )]
    NotPositiveSemidefinite { order: usize },

    #[error("quadrature did not converge: achieved error {achieved:e}, target {target:e}")]
    Quadrature { achieved: f64, target: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pricing failed for quote {index} (T={maturity}, K={strike}): {source}")]
    QuotePricing {
        index: usize,
        maturity: f64,
        strike: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
