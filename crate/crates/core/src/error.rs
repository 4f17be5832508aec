use thiserror::Error;

use crate::line_fitter::FitResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A temperature (or implied temperature) outside the linear calibration window.
    #[error("temperature {temperature_k:.4} K outside linear window {t_ref_k} ± {window_k} K")]
    OutOfRange {
        temperature_k: f64,
        t_ref_k: f64,
        window_k: f64,
    },

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        best: Box<FitResult>,
    },

    #[error("ill-conditioned problem: {0}")]
    IllConditioned(String),

    #[error("fit rejected: reduced chi-square {goodness:.3} exceeds {limit:.3}")]
    PoorFit { goodness: f64, limit: f64 },

    #[error("sampler failed to mix: acceptance fraction {acceptance:.4} after burn-in")]
    MixingFailure { acceptance: f64 },

    #[error("data quality: {0}")]
    DataQuality(String),

    #[error("probe coincides with heat source at ({x_um}, {y_um}) µm")]
    Singularity { x_um: f64, y_um: f64 },

    #[error("ill-posed fit: {0}")]
    IllPosed(String),

    #[error("degenerate probe: intensity at probe wavelength is zero")]
    DegenerateProbe,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Short machine-readable tag for the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "out_of_range",
            Error::Contract(_) => "contract",
            Error::NoSolution(_) => "no_solution",
            Error::NotConverged { .. } => "not_converged",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::PoorFit { .. } => "poor_fit",
            Error::MixingFailure { .. } => "mixing_failure",
            Error::DataQuality(_) => "data_quality",
            Error::Singularity { .. } => "singularity",
            Error::IllPosed(_) => "ill_posed",
            Error::DegenerateProbe => "degenerate_probe",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
