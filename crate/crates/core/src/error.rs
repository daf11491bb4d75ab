use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or structural constraint on the inputs was violated.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Peak calibration is inconsistent with the requested dephasing floor.
    #[error("peak {index}: FWHM {fwhm:.4e} rad/s is below the pure-dephasing rate {gamma_star:.4e} rad/s")]
    InconsistentCalibration { index: usize, fwhm: f64, gamma_star: f64 },

    #[error("unstable resonator: length {length:.4e} m must satisfy 0 < l < R = {roc:.4e} m")]
    UnstableResonator { length: f64, roc: f64 },

    #[error("Hilbert dimension {dim} exceeds the configured cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    /// Adaptive step fell below the representable minimum.
    #[error("step size underflow at t = {t:.4e} s (h = {h:.3e} s); rescale the rates")]
    StepUnderflow { t: f64, h: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config {path}: {msg}")]
    Config { path: String, msg: String },

    #[error("{path}: {msg}")]
    Data { path: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. } | Error::Singular(_) | Error::Numerical(_)
        )
    }
}
