use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("jump operator {index} has negative rate {rate}")]
    NegativeRate { index: usize, rate: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} is not Hermitian (defect {defect:.3e})")]
    NotHermitian { what: &'static str, defect: f64 },

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("steady state is not unique: found {zero_modes} zero modes")]
    SteadyStateNotUnique { zero_modes: usize },

    #[error(
        "left/right eigenvectors cannot be biorthonormalized \
         (eigenvector condition number {condition:.3e}); degenerate cluster {cluster:?}"
    )]
    Biorthonormalization {
        condition: f64,
        cluster: Vec<Complex64>,
    },

    #[error("eigen-residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    EigenResidual { residual: f64, tolerance: f64 },

    #[error("memory bound inapplicable: gap/g = {gap_over_g} does not exceed eps*|K| = {threshold}")]
    BoundInapplicable { gap_over_g: f64, threshold: f64 },

    #[error("joint system too large: {requested} probes requested, at most {max} supported")]
    Capacity { requested: usize, max: usize },

    #[error("no Heisenberg window: predicate fails already at N = 1 (ratio {ratio:.6})")]
    NoHeisenbergWindow { ratio: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
