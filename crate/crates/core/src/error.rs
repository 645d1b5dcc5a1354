use std::io;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid lattice geometry: {0}")]
    InvalidGeometry(String),
    #[error("coordinate ({x}, {y}) outside open {lx}x{ly} lattice")]
    CoordinateOutOfRange { x: i64, y: i64, lx: usize, ly: usize },
    #[error("states do not share a tree topology")]
    TopologyMismatch,
    #[error("invalid local operator: {0}")]
    InvalidOperator(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("Krylov exponential did not converge: residual {residual:.3e} > tol {tol:.3e} after {dim} vectors")]
    KrylovNotConverged { residual: f64, tol: f64, dim: usize },
    #[error("eigensolver did not converge: residual {residual:.3e} after {iterations} iterations")]
    EigenNotConverged { residual: f64, iterations: usize },
    #[error("sum problem: {0}")]
    InvalidSum(String),
    #[error("wave packet: {0}")]
    InvalidPacket(String),
    #[error("Hilbert space too large: {sites} sites (limit {limit})")]
    SizeOverflow { sites: usize, limit: usize },
    #[error("momentum sector: {0}")]
    Sector(String),
    #[error("no record within {tolerance} of baseline time {time}")]
    NoBaseline { time: f64, tolerance: f64 },
    #[error("threshold scan: {0}")]
    Scan(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

impl From<ndarray::ShapeError> for Error {
    fn from(e: ndarray::ShapeError) -> Self {
        Error::Linalg(e.to_string())
    }
}

impl Error {
    /// Process exit status: 2 for bad input, 3 for numerical failures,
    /// 4 for resource limits, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParams(_)
            | Error::InvalidGeometry(_)
            | Error::CoordinateOutOfRange { .. }
            | Error::InvalidPacket(_)
            | Error::InvalidOperator(_)
            | Error::Sector(_) => 2,
            Error::KrylovNotConverged { .. }
            | Error::EigenNotConverged { .. }
            | Error::Linalg(_)
            | Error::InvalidSum(_)
            | Error::NoBaseline { .. }
            | Error::Scan(_) => 3,
            Error::SizeOverflow { .. } => 4,
            Error::Io(e) if matches!(e.kind(), io::ErrorKind::OutOfMemory | io::ErrorKind::StorageFull) => 4,
            Error::Io(_) | Error::Format(_) | Error::TopologyMismatch => 1,
        }
    }
}
