use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("eigensolver did not converge (dim {dim}, condition estimate {condition:.3e})")]
    EigenNonConvergence { dim: usize, condition: f64 },

    #[error("eigendecomposition failed its accuracy check (dim {dim}, {what} = {value:.3e})")]
    InaccurateDecomposition { dim: usize, what: &'static str, value: f64 },

    #[error("matrix is not Hermitian (anti-Hermitian part {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },

    #[error("eigenvalue {eigenvalue} lies within 1e-9 of window boundary {boundary}; widen or shift the window")]
    WindowBoundary { eigenvalue: f64, boundary: f64 },

    #[error("function is not finite at eigenvalue {eigenvalue}")]
    Domain { eigenvalue: f64 },

    #[error("singular reduced resolvent: eigenvalue {eigenvalue} at index {index} is zero but not excluded")]
    SingularResolvent { eigenvalue: f64, index: usize },

    #[error("not a projector: {reason}")]
    NotProjector { reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("projection tracking is ambiguous at s = {s}: best overlaps {best:.4} and {second:.4}")]
    TrackingAmbiguity { s: f64, best: f64, second: f64 },

    #[error("projection tracking failed at s = {s}: {reason}")]
    Tracking { s: f64, reason: String },

    #[error("{steps} steps is below the integrator floor for tau = {tau}; at least {required} required")]
    StepsBelowFloor { tau: f64, steps: usize, required: usize },

    #[error("initial data is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("trajectory mismatch: {reason}")]
    TrajectoryMismatch { reason: String },

    #[error("gap {gap:.3e} around the tracked eigenvalue is below {threshold:.1e}; use the regularized solver")]
    GapTooSmall { gap: f64, threshold: f64 },

    #[error("tracked eigenvalue is not at zero (found {eigenvalue:.3e})")]
    TrackedEigenvalueNotZero { eigenvalue: f64 },

    #[error("grid too coarse near s = {s}: Richardson disagreement {disagreement:.1}% exceeds 20%")]
    GridTooCoarse { s: f64, disagreement: f64 },

    #[error("degenerate fit: {reason}")]
    DegenerateFit { reason: String },

    #[error("propagation failed at tau = {tau}: {source}")]
    Sweep {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown rate class: {0}")]
    UnknownRateClass(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
