use std::fmt;

/// Library-wide error type.
///
/// `InvalidArgument` marks caller mistakes, `Degenerate` marks sectors
/// with a single configuration (no dynamics to analyze), and the
/// remaining variants surface numerical failure modes that callers are
/// expected to branch on.
#[derive(Debug)]
pub enum Error {
    /// A precondition on caller-supplied values failed.
    InvalidArgument(String),
    /// The requested object exists but is a point mass (N = 0 or N = |sites|).
    Degenerate(String),
    /// Particle count of a configuration does not match the space or measure.
    ParticleMismatch {
        expected: usize,
        found: usize,
    },
    /// The move set does not connect the state space; the two named
    /// configurations lie in different communicating classes.
    Reducible {
        state_a: String,
        state_b: String,
    },
    /// A pencil comparison is vacuously infinite: some kernel vector of the
    /// right-hand form carries energy under the left-hand form.
    KernelEscape {
        residual: f64,
    },
    /// An iterative solve stopped above its residual target.
    NonConvergence {
        residual: f64,
        tolerance: f64,
    },
    Io(std::io::Error),
    /// Text deserialization failure (disorder fields, config files).
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate instance: {msg}"),
            Error::ParticleMismatch { expected, found } => {
                write!(f, "particle count mismatch: expected {expected}, found {found}")
            }
            Error::Reducible { state_a, state_b } => write!(
                f,
                "move set is reducible: states {state_a} and {state_b} are not connected"
            ),
            Error::KernelEscape { residual } => write!(
                f,
                "kernel containment failed: right-hand kernel vector carries energy {residual:.3e} under the left-hand form"
            ),
            Error::NonConvergence { residual, tolerance } => write!(
                f,
                "iterative solve did not converge: residual {residual:.3e} above tolerance {tolerance:.3e}"
            ),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
