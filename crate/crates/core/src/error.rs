use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mixing distribution: {0}")]
    InvalidMixing(String),
    #[error("invalid support specification: {0}")]
    InvalidSupport(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no observations")]
    NoObservations,
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("posterior mean undefined at y = {0}: zero density and zero atomic mass")]
    UndefinedPosterior(f64),
    #[error("dominance criterion indeterminate at y = {0}")]
    Indeterminate(f64),
    #[error("unbounded problem: {0}")]
    UnboundedProblem(String),
    #[error("no observations outside the location support; EM has nothing to fit")]
    EmptyResponsibility,
    #[error("no interior root of the eta equation for c = {c}, b = {b}")]
    NoInteriorRoot { c: f64, b: f64 },
    #[error("atom scale {scale} outside [{lo}, {hi}]")]
    ScaleOutOfRange { scale: f64, lo: f64, hi: f64 },
    #[error("truncation mass is zero")]
    ZeroTruncationMass,
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(format!("json: {e}"))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(format!("csv: {e}"))
    }
}
