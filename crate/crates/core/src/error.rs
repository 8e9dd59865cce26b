use thiserror::Error;

/// Errors raised by the Karma routing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KarmaError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("one-dimensional search did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate optimum {x1}/{x2}: both arcs must carry positive flow")]
    DegenerateOptimum { x1: f64, x2: f64 },

    #[error(
        "no price pair within max price {max_price} satisfies r2/p1 in [1/{horizon}, {horizon}]"
    )]
    InfeasibleHorizon { max_price: u32, horizon: u32 },

    #[error("karma {k} is below the feasibility floor {k_inf}")]
    InfeasibleKarma { k: f64, k_inf: f64 },

    #[error("karma {k} cannot pay the toll {toll}")]
    InsufficientKarma { k: f64, toll: f64 },

    #[error("prices ({p1}, -{r2}) are not co-prime with r2 >= p1")]
    NonCanonicalPrices { p1: u32, r2: u32 },

    #[error("stationary analysis requires P_home > 0; use trajectory simulation instead")]
    PeriodicChain,

    #[error("power iteration stopped after {iterations} steps with residual {residual:e}")]
    StationaryNonConvergence { iterations: usize, residual: f64 },

    #[error("Wardrop iteration stopped after {iterations} steps, last iterates {previous:?} -> {last:?}")]
    WardropNonConvergence {
        iterations: usize,
        previous: [f64; 2],
        last: [f64; 2],
    },

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for KarmaError {
    fn from(e: std::io::Error) -> Self {
        KarmaError::Io(e.to_string())
    }
}

impl From<csv::Error> for KarmaError {
    fn from(e: csv::Error) -> Self {
        KarmaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, KarmaError>;
