use thiserror::Error;

/// Errors raised by the numeric modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A dense construction was requested beyond its size guard.
    #[error("capacity error: requested {requested}, limit {limit}")]
    Capacity { requested: usize, limit: usize },

    /// A numeric procedure failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// No state in the block family satisfies the probability constraints.
    #[error("infeasible constraints: P2 = {p2:e} exceeds the family maximum {p2_max:e} at P1 = {p1:e} (M = {depth})")]
    Infeasible { depth: usize, p1: f64, p2: f64, p2_max: f64 },

    /// The measured contrast exceeds what any admissible state can produce.
    #[error("inconsistent input: R = {r} exceeds the largest attainable contrast {r_max} for N = {n_teeth}")]
    Inconsistent { r: f64, r_max: f64, n_teeth: usize },

    /// The echo could not be resolved above the noise.
    #[error("low signal: {0}")]
    LowSignal(String),

    /// Fitted echo is narrower than the detector response.
    #[error("deconvolution singular: echo FWHM {echo_fwhm:e} s <= detector FWHM {detector_fwhm:e} s")]
    Deconvolution { echo_fwhm: f64, detector_fwhm: f64 },

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Capacity { .. } => "capacity",
            Error::Numeric(_) => "numeric",
            Error::Infeasible { .. } => "infeasible",
            Error::Inconsistent { .. } => "inconsistent",
            Error::LowSignal(_) => "low_signal",
            Error::Deconvolution { .. } => "deconvolution",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
