use thiserror::Error;

/// Errors raised by every module in the crate.
///
/// Variants split into two families: input problems (bad shapes, bad roles,
/// malformed files) and numerical failures (singular systems, optimizer
/// trouble). [`Error::is_numerical`] tells them apart; the CLI maps the two
/// families to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid role assignment: {0}")]
    Roles(String),

    #[error("rank-deficient regressors: columns {columns:?} are collinear with earlier columns")]
    Collinear { columns: Vec<String> },

    #[error("singular {what}: smallest singular value {sigma_min:.3e} (largest {sigma_max:.3e})")]
    Singular {
        what: &'static str,
        sigma_min: f64,
        sigma_max: f64,
    },

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("irrelevant instrument: {0}")]
    IrrelevantInstrument(String),

    #[error(
        "matrix is not negative definite (largest eigenvalue {max_eigenvalue:.3e}); the utility has no strict maximum"
    )]
    NotNegativeDefinite { max_eigenvalue: f64 },

    #[error("long-run variance has eigenvalue {eigenvalue:.3e} below tolerance {tolerance:.3e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("shock recovery failed: max reconstruction error {residual:.3e} exceeds {tolerance:.3e}")]
    Recovery { residual: f64, tolerance: f64 },

    #[error("optimizer did not converge: {0}")]
    Convergence(String),

    #[error("too many failed replications: {failed} of {total} dropped (limit 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn at_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_numerical(),
            Error::Collinear { .. }
            | Error::Singular { .. }
            | Error::IrrelevantInstrument(_)
            | Error::NotNegativeDefinite { .. }
            | Error::NotPsd { .. }
            | Error::Recovery { .. }
            | Error::Convergence(_)
            | Error::TooManyFailures { .. } => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
