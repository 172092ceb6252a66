use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid quantile grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("complete separation in column `{column}`: {detail}")]
    Separation { column: String, detail: String },

    #[error("nothing to fit: {0}")]
    NothingToFit(String),

    /// Violation of the propensity or double-sampling positivity assumptions.
    #[error("positivity violation: {0}")]
    Positivity(String),

    #[error("arm z={arm} has no positive weight")]
    EmptyArm { arm: u8 },

    #[error("singular Sigma at tau={tau}: density estimate D0={d0:.3e}, D1={d1:.3e}; use a bootstrap method instead")]
    SingularSigma { tau: f64, d0: f64, d1: f64 },

    #[error("degenerate resampling: {redraws} redraws exceeded the cap of {cap}")]
    DegenerateResample { redraws: usize, cap: usize },

    #[error("tilted target mass for arm z={arm} at tau={tau} falls outside the arm total")]
    TiltOutOfRange { tau: f64, arm: u8 },

    #[error("degenerate band: zero bootstrap spread at tau={tau}")]
    DegenerateBand { tau: f64 },

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    /// Whether a bootstrap replicate hitting this error should be redrawn.
    pub fn is_degenerate_sample(&self) -> bool {
        matches!(
            self,
            Error::EmptyArm { .. }
                | Error::Separation { .. }
                | Error::Positivity(_)
                | Error::NothingToFit(_)
                | Error::SingularDesign(_)
                | Error::TiltOutOfRange { .. }
        )
    }

    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Configuration(_) => "configuration",
            Error::SingularDesign(_) => "singular_design",
            Error::Separation { .. } => "separation",
            Error::NothingToFit(_) => "nothing_to_fit",
            Error::Positivity(_) => "positivity",
            Error::EmptyArm { .. } => "empty_arm",
            Error::SingularSigma { .. } => "singular_sigma",
            Error::DegenerateResample { .. } => "degenerate_resample",
            Error::TiltOutOfRange { .. } => "tilt_out_of_range",
            Error::DegenerateBand { .. } => "degenerate_band",
            Error::Domain(_) => "domain",
        }
    }
}
