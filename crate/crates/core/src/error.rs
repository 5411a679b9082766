use thiserror::Error;

/// Errors produced by the design, analysis and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("system is not stable (pole or eigenvalue magnitude {radius:.12} >= 1)")]
    UnstableSystem { radius: f64 },

    #[error("Lyapunov iteration did not converge (residual {residual:.3e})")]
    LyapunovFailure { residual: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("transfer function is not proper: {0}")]
    ImproperTransferFunction(String),

    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    #[error("invalid privacy parameters: {0}")]
    InvalidPrivacy(String),

    #[error("system is not diagonal (entry ({row}, {col}) is nonzero)")]
    NotDiagonal { row: usize, col: usize },

    #[error("tail bound still {bound:.3e} after {max_horizon} lags")]
    HorizonExceeded { max_horizon: usize, bound: f64 },

    #[error("brute-force oracle limits exceeded: {0}")]
    OracleTooLarge(String),

    #[error("spectrum is not factorizable{}: {reason}", column.map(|c| format!(" (column {c})")).unwrap_or_default())]
    NotFactorizable {
        column: Option<usize>,
        reason: String,
    },

    #[error("rational fit failed (condition diagnostic {condition:.3e}): {reason}")]
    FitFailed { condition: f64, reason: String },

    #[error("spectrum sample {index} is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { index: usize, min_eigenvalue: f64 },

    #[error("block spectral factorization stalled after {iterations} steps (change {change:.3e})")]
    FactorizationStalled { iterations: usize, change: f64 },

    #[error("filter inverse is unstable (root magnitude {radius:.12})")]
    UnstableInverse { radius: f64 },

    #[error("objective is degenerate: {0}")]
    DegenerateObjective(String),

    #[error("optimizer stalled after {iterations} iterations (constraint residual {residual:.3e}, best objective {best_objective:.6e})")]
    OptimizerStalled {
        iterations: usize,
        residual: f64,
        best_objective: f64,
    },

    #[error("Markov chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("forecast model coefficients are missing: {0}")]
    MissingForecastModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used by the command-line tool to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Infeasible,
}

impl Error {
    /// Module-qualified error code, e.g. `privacy::InvalidDelta`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnstableSystem { .. } => "lti::UnstableSystem",
            Error::LyapunovFailure { .. } => "lti::LyapunovFailure",
            Error::DimensionMismatch { .. } => "lti::DimensionMismatch",
            Error::ImproperTransferFunction(_) => "lti::ImproperTransferFunction",
            Error::InvalidDelta(_) => "privacy::InvalidDelta",
            Error::InvalidPrivacy(_) => "privacy::InvalidPrivacy",
            Error::NotDiagonal { .. } => "sensitivity::NotDiagonal",
            Error::HorizonExceeded { .. } => "sensitivity::HorizonExceeded",
            Error::OracleTooLarge(_) => "sensitivity::OracleTooLarge",
            Error::NotFactorizable { .. } => "spectral::NotFactorizable",
            Error::FitFailed { .. } => "spectral::FitFailed",
            Error::NotPositiveDefinite { .. } => "spectral::NotPositiveDefinite",
            Error::FactorizationStalled { .. } => "spectral::FactorizationStalled",
            Error::UnstableInverse { .. } => "zfe::UnstableInverse",
            Error::DegenerateObjective(_) => "lms::DegenerateObjective",
            Error::OptimizerStalled { .. } => "lms::OptimizerStalled",
            Error::NotErgodic(_) => "markov::NotErgodic",
            Error::MissingForecastModel(_) => "sim::MissingForecastModel",
            Error::Config(_) => "cli::Config",
            Error::Parse(_) => "io::Parse",
            Error::Io(_) => "io::Io",
            Error::Csv(_) => "io::Csv",
            Error::Json(_) => "io::Json",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidDelta(_)
            | Error::InvalidPrivacy(_)
            | Error::Config(_)
            | Error::Parse(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::MissingForecastModel(_)
            | Error::DimensionMismatch { .. }
            | Error::ImproperTransferFunction(_)
            | Error::OracleTooLarge(_) => ErrorClass::Config,
            Error::UnstableSystem { .. }
            | Error::NotDiagonal { .. }
            | Error::NotFactorizable { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::UnstableInverse { .. }
            | Error::DegenerateObjective(_)
            | Error::NotErgodic(_) => ErrorClass::Infeasible,
            Error::LyapunovFailure { .. }
            | Error::HorizonExceeded { .. }
            | Error::FitFailed { .. }
            | Error::FactorizationStalled { .. }
            | Error::OptimizerStalled { .. } => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
