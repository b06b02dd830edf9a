use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid of {nodes} nodes exceeds the configured cap of {cap} nodes")]
    ResourceCap { nodes: usize, cap: usize },

    #[error("fields live on incompatible grids")]
    GridMismatch,

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operator is not coercive: symbol {value:e} at |k|^2 = {k2}")]
    NotCoercive { k2: f64, value: f64 },

    #[error("ray misses the Nehari set{suffix}: {reason}")]
    RayMissesNehari { suffix: &'static str, reason: String },

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {error:e} after {evaluations} evaluations")]
    Quadrature {
        a: f64,
        b: f64,
        error: f64,
        evaluations: usize,
    },

    #[error("least-squares design matrix is rank deficient")]
    RankDeficient,

    #[error("no interior barrier found along the path")]
    NoInteriorBarrier,

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
