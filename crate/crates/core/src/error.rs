use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error(
        "table gap: |z| = {radius} lies past the last tabulated radius {table_end} but inside the truncation radius"
    )]
    TableGap { radius: f64, table_end: f64 },

    #[error("moment of order {order} is not finite")]
    NonFiniteMoment { order: usize },

    #[error("moment order {0} exceeds 4")]
    MomentOrder(usize),

    #[error("invalid mu: {0}")]
    InvalidMu(String),

    #[error("mu not symmetric: max |mu(x,y) - mu(y,x)| = {0:e}")]
    MuNotSymmetric(f64),

    #[error("N must be even (got {0})")]
    OddResolution(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("derivative order {0} exceeds 4")]
    DerivativeOrder(usize),

    #[error("effective matrix is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("effective matrix asymmetric: |g_kl - g_lk| = {0:e}")]
    EffectiveAsymmetric(f64),

    #[error("contour hits spectrum: eigenvalue {eigenvalue} inside the forbidden band ({lower}, {upper})")]
    ContourHitsSpectrum { eigenvalue: f64, lower: f64, upper: f64 },

    #[error("contour encloses {0} eigenvalues, expected exactly one")]
    ContourRank(usize),

    #[error("contour quadrature did not reach the idempotency target with {points} points (defect {defect:e})")]
    ContourAccuracy { points: usize, defect: f64 },

    #[error("rearrangement too coarse: no admissible t0 on the grid")]
    RearrangementTooCoarse,

    #[error("rearrangement argument must be positive (got {0})")]
    NonPositiveMeasure(f64),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("resolvent residual {0:e} exceeds 1e-9")]
    ResolventResidual(f64),

    #[error("power iteration did not converge after {iterations} iterations (estimate {estimate:e}, last change {change:e})")]
    PowerIteration { iterations: usize, estimate: f64, change: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
