use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected length {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("regularization parameter must be positive: alpha[{index}] = {value}")]
    NonPositiveAlpha { index: usize, value: f64 },

    #[error(
        "conjugate gradient breakdown at step {step} (d'Ad = {curvature:.3e}); \
         the operator is not positive definite or the iteration lost stability"
    )]
    CgBreakdown { step: usize, curvature: f64 },

    #[error("tridiagonal matrix has no steps to assemble (empty CG transcript)")]
    EmptyTranscript,

    #[error("CG step size must be positive: gamma[{index}] = {value}")]
    NonPositiveGamma { index: usize, value: f64 },

    #[error("CG residual ratio must be nonnegative: xi[{index}] = {value}")]
    NegativeXi { index: usize, value: f64 },

    #[error("tridiagonal eigensolver failed to converge for eigenvalue {index}")]
    EigenNoConvergence { index: usize },

    #[error(
        "quadrature received a nonpositive Ritz value ({value:.3e}); \
         the normal operator lost positive definiteness"
    )]
    NonPositiveRitzValue { value: f64 },

    #[error("Cholesky factorization failed: the posterior precision is not positive definite")]
    FactorizationFailed,

    #[error(
        "dense EM path refused: dimension {dim} exceeds the dense limit {limit}; \
         use the covariance-free solver for problems of this size"
    )]
    DenseLimitExceeded { dim: usize, limit: usize },

    #[error("all responsibilities underflowed to zero; log-evidence terms are degenerate")]
    DegenerateResponsibilities,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible support layout: {0}")]
    InfeasibleSupports(String),

    #[error("normalized error is undefined for an all-zero ground truth")]
    ZeroTruthNorm,

    #[error("task {task}, cluster {cluster}: {source}")]
    TaskCluster {
        task: usize,
        cluster: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data file: {0}")]
    Format(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Annotates an error with the (task, cluster) pair it occurred in.
    pub fn at_task_cluster(self, task: usize, cluster: usize) -> Self {
        Error::TaskCluster {
            task,
            cluster,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
