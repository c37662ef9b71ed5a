use std::fmt;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit codes: configuration and precondition
/// problems exit 1, scenarios that cannot physically run exit 2, and
/// numerical failures exit 3.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Model parameters violate an invariant (e.g. the discriminator regime).
    InvalidModel(String),
    /// An operation precondition does not hold (bad span, bad tolerance, ...).
    InvalidInput(String),
    /// The requested scenario is physically infeasible; carries the offending
    /// time intervals when known.
    Infeasible {
        detail: String,
        intervals: Vec<(f64, f64)>,
    },
    /// A measurement found no threshold crossing in the simulated span.
    NoCrossing(String),
    /// A numeric procedure failed (tolerance budget, bracketing, bad fit).
    Numeric(String),
    /// Malformed input file.
    Parse(String),
    /// Filesystem error.
    Io(String),
}

impl Error {
    pub fn infeasible(detail: impl Into<String>) -> Self {
        Error::Infeasible {
            detail: detail.into(),
            intervals: Vec::new(),
        }
    }

    /// CLI exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidModel(_) | Error::InvalidInput(_) | Error::Parse(_) | Error::Io(_) => 1,
            Error::Infeasible { .. } | Error::NoCrossing(_) => 2,
            Error::Numeric(_) => 3,
        }
    }

    /// Short machine-readable tag for error JSON output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidInput(_) => "invalid_input",
            Error::Infeasible { .. } => "infeasible",
            Error::NoCrossing(_) => "no_crossing",
            Error::Numeric(_) => "numeric",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidModel(m) => write!(f, "invalid model: {m}"),
            Error::InvalidInput(m) => write!(f, "invalid input: {m}"),
            Error::Infeasible { detail, intervals } => {
                write!(f, "infeasible: {detail}")?;
                if !intervals.is_empty() {
                    write!(f, " (intervals:")?;
                    for (a, b) in intervals {
                        write!(f, " [{a:.6e}, {b:.6e}]")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
            Error::NoCrossing(m) => write!(f, "no crossing: {m}"),
            Error::Numeric(m) => write!(f, "numeric failure: {m}"),
            Error::Parse(m) => write!(f, "parse error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
