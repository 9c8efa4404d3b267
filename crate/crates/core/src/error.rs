use std::fmt;

/// Coarse classification of every failure the crate can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    LengthMismatch,
    EmptySignal,
    InfeasibleBounds,
    NonPositiveParameter,
    SpectrumNotPositive,
    NoConvergence,
    IoOrFormatError,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ErrorKind::LengthMismatch => "length mismatch",
            ErrorKind::EmptySignal => "empty signal",
            ErrorKind::InfeasibleBounds => "infeasible bounds",
            ErrorKind::NonPositiveParameter => "invalid parameter",
            ErrorKind::SpectrumNotPositive => "spectrum not positive",
            ErrorKind::NoConvergence => "no convergence",
            ErrorKind::IoOrFormatError => "i/o or format error",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {context} (expected {expected}, got {actual})")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("signal is empty")]
    EmptySignal,

    #[error("infeasible bounds at sample {index}: lower {lower} > upper {upper}")]
    InfeasibleBounds { index: usize, lower: f64, upper: f64 },

    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    NonPositiveParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("spectrum not positive: 1 + alpha * eigenvalue = {value:.3e} at bin {index}")]
    SpectrumNotPositive { index: usize, value: f64 },

    #[error("no convergence after {iters} iterations (residual {residual:.3e}, tol {tol:.3e})")]
    NoConvergence { iters: usize, residual: f64, tol: f64 },

    #[error("{0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("trial with seed {seed} failed: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::LengthMismatch { .. } => ErrorKind::LengthMismatch,
            Error::EmptySignal => ErrorKind::EmptySignal,
            Error::InfeasibleBounds { .. } => ErrorKind::InfeasibleBounds,
            Error::NonPositiveParameter { .. } => ErrorKind::NonPositiveParameter,
            Error::SpectrumNotPositive { .. } => ErrorKind::SpectrumNotPositive,
            Error::NoConvergence { .. } => ErrorKind::NoConvergence,
            Error::Format(_) | Error::Io { .. } => ErrorKind::IoOrFormatError,
            Error::Trial { source, .. } => source.kind(),
        }
    }

    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::NonPositiveParameter {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn length(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::LengthMismatch {
            context,
            expected,
            actual,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::length(context, expected, actual))
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, value, "must be finite and > 0"))
    }
}
