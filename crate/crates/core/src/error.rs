use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectral measure: {0}")]
    InvalidMeasure(String),

    #[error("degenerate spectral measure: min psi on the sphere is {min_psi:.3e} (floor {floor:.3e})")]
    DegenerateMeasure { min_psi: f64, floor: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grids do not match")]
    GridMismatch,

    #[error("under-resolved grid: exp(-t psi) at the Nyquist frequency is {decay:.3e} > {required:.3e}")]
    UnderResolved { decay: f64, required: f64 },

    #[error("invalid Besov index: {0}")]
    InvalidIndex(String),

    #[error("thermic v-grid too coarse: exp(-v_min |lambda|^alpha) = {decay:.3e} at the highest active frequency")]
    VGridTooCoarse { decay: f64 },

    #[error("need at least {required} dyadic lags, got {got}")]
    NotEnoughLags { required: usize, got: usize },

    #[error("invalid drift spec: {0}")]
    InvalidDrift(String),

    #[error("regularity gate failed ({0}); pass gate_override to study failure modes")]
    GateFailed(String),

    #[error("solver requires a mollified drift (delta > 0)")]
    MollificationRequired,

    #[error("Picard iteration did not contract: factor {factor:.3} after {iterations} iterations")]
    NonContraction { factor: f64, iterations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
