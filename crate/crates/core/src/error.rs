use thiserror::Error;

pub type Result<T, E = GemError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GemError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("absorption denominator vanishes at delta_s = {delta_s}")]
    SingularSpectrum { delta_s: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (estimated error {error:e})")]
    QuadratureNonConvergence { a: f64, b: f64, error: f64 },

    #[error("solver became unstable at t = {t} us: {field} diverged")]
    Unstable { t: f64, field: &'static str },

    #[error("input trace carries no energy")]
    ZeroInput,

    #[error("efficiency {eta:e} is below the floor {floor:e}; recall peak time is meaningless")]
    EfficiencyBelowFloor { eta: f64, floor: f64 },

    #[error("snapshots were not recorded for this run")]
    SnapshotsDisabled,

    #[error("every objective evaluation failed")]
    AllEvaluationsFailed,

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GemError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        GemError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            GemError::SingularSpectrum { .. }
                | GemError::QuadratureNonConvergence { .. }
                | GemError::Unstable { .. }
                | GemError::EfficiencyBelowFloor { .. }
                | GemError::AllEvaluationsFailed
        )
    }
}
