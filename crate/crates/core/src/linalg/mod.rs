//! Matrix storage, the linear system type and its derived quantities.

mod matrix;
mod spectral;
mod system;

pub use matrix::{
    dist_sq, dot, norm_sq, CsrMatrix, DenseMatrix, Matrix, RowView, DENSE_DENSITY_THRESHOLD,
    DENSE_MAX_NARROW_COLS,
};
pub use spectral::{SpectralSummary, CONSISTENCY_TOL, SPECTRAL_DIM_CAP};
pub use system::{
    CoherenceSummary, LinearSystem, DEFAULT_DELTA_ROW_CAP, GRAM_CACHE_MAX_ROWS,
    PAIRWISE_DEPENDENCE_TOL,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("row {0} has zero norm")]
    ZeroRow(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("at least two rows are required, got {0}")]
    TooFewRows(usize),
    #[error("rows {0} and {1} are linearly dependent")]
    PairwiseDependentRows(usize, usize),
    #[error("{what} skipped: size {size} exceeds cap {cap}")]
    SizeCapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },
    #[error("system is inconsistent: ‖A x* - b‖ = {residual:e} exceeds {tolerance:e}")]
    InconsistentSystem { residual: f64, tolerance: f64 },
    #[error("singular value decomposition failed")]
    SvdFailed,
    #[error("malformed sparse matrix: {0}")]
    MalformedSparse(String),
    #[error("cannot build row sampler: {0}")]
    Sampling(String),
}
