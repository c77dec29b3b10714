//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A sampled (non-periodic) environment was asked for a site outside
    /// its generated window.
    #[error("site {site} outside environment window [{lo}, {hi}]")]
    OutOfWindow { site: i64, lo: i64, hi: i64 },

    /// A lattice DP needs the environment to cover the full space-time cone.
    #[error("environment window too small: need [{need_lo}, {need_hi}], have [{lo}, {hi}]")]
    WindowTooSmall {
        need_lo: i64,
        need_hi: i64,
        lo: i64,
        hi: i64,
    },

    #[error("no {kind} feature found within search radius {radius} of site {around}")]
    FeatureNotFound {
        kind: &'static str,
        around: i64,
        radius: i64,
    },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("root bracketing failed: {0}")]
    BracketFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("policy not admissible: {0}")]
    InadmissiblePolicy(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
