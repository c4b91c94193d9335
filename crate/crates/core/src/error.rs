use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid object point x = {x} mm: object must lie downstream of the source (x > 0)")]
    InvalidObjectPoint { x: f64 },

    #[error("degenerate ray: {0}")]
    DegenerateRay(&'static str),

    #[error("scatter angle {theta} rad is singular for the spectral factor")]
    Singularity { theta: f64 },

    #[error("scatter angle {theta} rad exceeds the tabulated range (max {theta_max} rad)")]
    AngleOutOfRange { theta: f64, theta_max: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate mask: {0}")]
    DegenerateMask(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unbounded voxel update (chi1 = 0, chi2 = {chi2})")]
    UnboundedUpdate { chi2: f64 },

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("invalid phantom: {0}")]
    Phantom(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{msg}")]
    Numerical { msg: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
