use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cannot project the sphere center onto the surface")]
    DegenerateProjection,
    #[error("point is off the surface by {offset:.3e} m (tolerance {tolerance:.3e} m)")]
    OffSurface { offset: f64, tolerance: f64 },
    #[error("endpoints coincide; no geodesic direction is defined")]
    CoincidentEndpoints,
    #[error("endpoints are antipodal (central angle {angle} rad); the geodesic is not unique")]
    AntipodalEndpoints { angle: f64 },
    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("plane at height {height} m does not cut a sphere of radius {radius} m")]
    NoIntersection { height: f64, radius: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),
    #[error(
        "solution did not converge (constraint residual {constraint_residual:.3e}, ODE residual {ode_residual:.3e})"
    )]
    NotConverged {
        constraint_residual: f64,
        ode_residual: f64,
    },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("least-squares fit is rank deficient")]
    RankDeficient,
    #[error("reference trajectory has zero length")]
    DegenerateReference,
    #[error("movement has zero path length")]
    ZeroPathLength,
    #[error("signed-rank test undefined: all paired differences are zero")]
    UndefinedTest,
    #[error("contingency table has a zero marginal")]
    DegenerateTable,
    #[error("missing data for subjects: {0:?}")]
    MissingData(Vec<String>),
    #[error("line {line}: {message}")]
    LogFormat { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
