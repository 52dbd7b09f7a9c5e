use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square or has dimension {0} (need d >= 2)")]
    BadShape(usize),

    #[error("matrix is not unimodular: det = {0}")]
    NotUnimodular(i128),

    #[error("matrix is not hyperbolic: eigenvalue modulus {0} is within 1e-9 of 1")]
    NotHyperbolic(f64),

    #[error("matrix has non-real eigenvalues")]
    NonRealSpectrum,

    #[error("dimension {0} exceeds the supported bound of {1}")]
    DimensionTooLarge(usize, usize),

    #[error("perturbation too large: certified C1 distance {bound} exceeds threshold {threshold}")]
    PerturbationTooLarge { bound: f64, threshold: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("requested exponent spread {requested} not achieved (measured {measured})")]
    ProfileNotAchieved { requested: f64, measured: f64 },

    #[error("orbit escaped precision after {step} steps")]
    OrbitEscapedPrecision { step: usize },

    #[error("cone collapse: domination margin {margin:e}, residual {residual:e}")]
    ConeCollapse { margin: f64, residual: f64 },

    #[error("leaf step rejected below minimum step {0}")]
    StepRejected(f64),

    #[error("ball boundary {needed} exceeds traced half-length {available}")]
    TraceTooShort { needed: f64, available: f64 },

    #[error("series did not converge: {0}")]
    NoConvergence(String),

    #[error("Newton diverged: {0}")]
    NewtonDiverged(String),

    #[error("affine fit unstable: {0}")]
    FitUnstable(String),

    #[error("invalid input at `{field}`: {message}")]
    Invalid { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the inputs rather than by a numerical
    /// procedure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::BadShape(_)
                | Error::NotUnimodular(_)
                | Error::NotHyperbolic(_)
                | Error::NonRealSpectrum
                | Error::DimensionTooLarge(..)
                | Error::PerturbationTooLarge { .. }
                | Error::Precondition(_)
                | Error::Invalid { .. }
        )
    }

    /// Stable identifier of the variant, used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BadShape(_) => "bad_shape",
            Error::NotUnimodular(_) => "not_unimodular",
            Error::NotHyperbolic(_) => "not_hyperbolic",
            Error::NonRealSpectrum => "non_real_spectrum",
            Error::DimensionTooLarge(..) => "dimension_too_large",
            Error::PerturbationTooLarge { .. } => "perturbation_too_large",
            Error::Precondition(_) => "precondition",
            Error::ProfileNotAchieved { .. } => "profile_not_achieved",
            Error::OrbitEscapedPrecision { .. } => "orbit_escaped_precision",
            Error::ConeCollapse { .. } => "cone_collapse",
            Error::StepRejected(_) => "step_rejected",
            Error::TraceTooShort { .. } => "trace_too_short",
            Error::NoConvergence(_) => "no_convergence",
            Error::NewtonDiverged(_) => "newton_diverged",
            Error::FitUnstable(_) => "fit_unstable",
            Error::Invalid { .. } => "invalid",
        }
    }
}
