use thiserror::Error;

/// Errors raised by the simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("step size underflow at t = {t} (h = {step:e})")]
    StepUnderflow { t: f64, step: f64 },

    #[error("trace drift {drift:e} exceeds budget {budget:e} at t = {t}")]
    TraceDrift { t: f64, drift: f64, budget: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("steady state is not unique: null space has dimension {dim} (smallest singular values {singular_values:?})")]
    AmbiguousSteadyState {
        dim: usize,
        singular_values: Vec<f64>,
    },

    #[error("superoperator dimension {dim} exceeds the limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("fock cutoff not converged at {point}: relative change {rel_change:e} > {tol:e} (cutoff {cutoff} -> {doubled})")]
    CutoffNotConverged {
        point: String,
        rel_change: f64,
        tol: f64,
        cutoff: usize,
        doubled: usize,
    },

    #[error("trajectory too short: spans {span} but needs {needed}")]
    TrajectoryTooShort { span: f64, needed: f64 },

    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    #[error("at {point}: {source}")]
    AtPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {}", .issues.join("; "))]
    Config { issues: Vec<String> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::AtPoint { source, .. } => source.is_numerical(),
            Error::Domain(_)
            | Error::Dimension { .. }
            | Error::Config { .. }
            | Error::Io { .. } => false,
            _ => true,
        }
    }

    /// Process exit code: 1 for I/O, 2 for invalid input, 3 for numerical
    /// failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AtPoint { source, .. } => source.exit_code(),
            Error::Io { .. } => 1,
            e if e.is_numerical() => 3,
            _ => 2,
        }
    }

    /// Attaches the sweep point or case an error came from.
    pub fn at(self, point: impl Into<String>) -> Self {
        Error::AtPoint {
            point: point.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
