use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {x} outside the map domain")]
    Domain { x: f64 },

    #[error("branch inverse on branch {branch} did not converge for target {target}")]
    BranchInverse { branch: usize, target: f64 },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: expected {expected}, got {got}")]
    GridMismatch { expected: String, got: String },

    #[error("{0} is not supported for piecewise maps")]
    Unsupported(&'static str),

    #[error("density has mean {mean:e}, expected zero average")]
    NonZeroAverage { mean: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("no uniform Lasota-Yorke inequality: {0}")]
    NoUniformLy(String),

    #[error("fiber map is not an {alpha}-contraction on the support (ratio {ratio})")]
    Contraction { alpha: f64, ratio: f64 },

    #[error("invariant density required in invariant mode")]
    MissingInvariantDensity,

    #[error("empirical sigma {sigma_hat:e} below threshold; observable may be a coboundary")]
    CoboundarySuspected { sigma_hat: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable variant name for machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Domain { .. } => "domain",
            Self::BranchInverse { .. } => "branch_inverse",
            Self::InvalidMap(_) => "invalid_map",
            Self::InvalidArgument(_) => "invalid_argument",
            Self::GridMismatch { .. } => "grid_mismatch",
            Self::Unsupported(_) => "unsupported",
            Self::NonZeroAverage { .. } => "non_zero_average",
            Self::NoConvergence { .. } => "no_convergence",
            Self::NoUniformLy(_) => "no_uniform_ly",
            Self::Contraction { .. } => "contraction",
            Self::MissingInvariantDensity => "missing_invariant_density",
            Self::CoboundarySuspected { .. } => "coboundary_suspected",
            Self::Io(_) => "io",
            Self::Csv(_) => "csv",
        }
    }
}
