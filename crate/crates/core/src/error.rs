use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("triangle index {index} out of range (mesh has {count} triangles)")]
    TriangleOutOfRange { index: usize, count: usize },

    #[error("unsupported quadrature degree {0} (supported: 1..=10)")]
    UnsupportedQuadrature(usize),

    #[error("space mismatch: expected {expected}, found {found}")]
    SpaceMismatch { expected: String, found: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular system in block `{block}`: {detail}")]
    Singular { block: String, detail: String },

    #[error("nonlinear iteration failed at step {step}: residual {residual:.3e} after {iterations} iterations")]
    NonlinearDivergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid noise request: {0}")]
    Noise(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("study aborted: {failed} of {total} paths failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
