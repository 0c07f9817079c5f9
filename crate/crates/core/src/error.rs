use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("mode count {0} is even; symmetric placement around mode 0 is undefined")]
    EvenModeCount(usize),

    #[error("cannot step derived laser {0:?}; it is computed from the driven lasers")]
    DerivedLaser(crate::lockchain::LaserId),

    #[error("pits around modes {a_hz} Hz and {b_hz} Hz overlap")]
    OverlappingPits { a_hz: f64, b_hz: f64 },

    #[error("spectral grid too coarse: step {step_hz} Hz exceeds limit {limit_hz} Hz")]
    GridTooCoarse { step_hz: f64, limit_hz: f64 },

    #[error("spectrum does not cover [{lo_hz}, {hi_hz}] Hz around the requested mode")]
    SpectrumCoverage { lo_hz: f64, hi_hz: f64 },

    #[error("noise floor unresolved: noise window holds no counts")]
    NoiseFloorUnresolved,

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("parameter path `{0}` does not address a numeric config field")]
    NonNumericPath(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::EvenModeCount(_) => "even_mode_count",
            Error::DerivedLaser(_) => "derived_laser",
            Error::OverlappingPits { .. } => "overlapping_pits",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::SpectrumCoverage { .. } => "spectrum_coverage",
            Error::NoiseFloorUnresolved => "noise_floor_unresolved",
            Error::Calibration(_) => "calibration",
            Error::NonNumericPath(_) => "non_numeric_path",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Offending config field, when the error names one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::InvalidParameter { field, .. } => Some(field),
            Error::NonNumericPath(p) => Some(p),
            Error::Config { path, .. } => Some(path),
            _ => None,
        }
    }
}
