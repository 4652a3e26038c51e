use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid datum: {0}")]
    InvalidDatum(String),

    #[error("under-resolved: {parameter} ({detail})")]
    UnderResolved { parameter: String, detail: String },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("design matrix is numerically singular (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "flow diverged at t = {time:.6}: L2 norm grew to {ratio:.2}x its initial value; \
         reduce eta or dt"
    )]
    Divergence { time: f64, ratio: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("far-field profile vanishes: K is proportional to the identity")]
    ProfileVanishes,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn under_resolved(parameter: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::UnderResolved {
            parameter: parameter.into(),
            detail: detail.into(),
        }
    }
}
