use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a space needs at least one subsystem")]
    EmptySpace,
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("subsystem `{label}` has dimension {dim}; at least 2 is required")]
    BadDimension { label: String, dim: usize },
    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("level index {level} out of range for a {dim}-level system")]
    LevelOutOfRange { level: usize, dim: usize },
    #[error("operators live on different spaces")]
    SpaceMismatch,
    #[error("invalid device: {0}")]
    InvalidDevice(String),
    #[error("invalid state `{label}`: {reason}")]
    InvalidState { label: String, reason: String },
    #[error("matrix is not Hermitian: residual {residual:.3e} against scale {scale:.3e}")]
    NotHermitian { residual: f64, scale: f64 },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("sweep has no values")]
    EmptySweep,
    #[error("no interior gap minimum in [{lo}, {hi}]")]
    NoInteriorMinimum { lo: f64, hi: f64 },
    #[error(
        "states {initial} and {target} are not degenerate: |E_i - E_f| = {mismatch:.4e} exceeds {tolerance:.4e}"
    )]
    NotDegenerate {
        initial: String,
        target: String,
        mismatch: f64,
        tolerance: f64,
    },
    #[error("order must be a positive even number, got {0}")]
    BadOrder(usize),
    #[error("closed form `{which}` does not apply to this device: {reason}")]
    TopologyMismatch { which: String, reason: String },
    #[error("integration failed at t = {t:.6} ns: {reason}")]
    Integration { t: f64, reason: String },
    #[error("density matrix invariant violated at t = {t:.6} ns: {reason}")]
    InvariantViolation { t: f64, reason: String },
    #[error("no oscillation found in `{0}`")]
    NoOscillation(String),
    #[error("unknown observable `{0}`")]
    UnknownObservable(String),
    #[error("time {t} ns outside trajectory [{start}, {end}]")]
    OutsideTrajectory { t: f64, start: f64, end: f64 },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("config: {0}")]
    Config(String),
    #[error("scenario `{name}`: {source}")]
    Scenario {
        name: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Config(e.to_string())
    }
}
