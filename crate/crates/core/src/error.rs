use thiserror::Error;

/// Every failure mode of the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("domain exhausted: {0}")]
    DomainExhausted(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate immersion at {location:?}: smallest singular value {sigma:.3e}")]
    DegenerateImmersion { location: Vec<f64>, sigma: f64 },

    #[error("frame seed collapse at {location:?}: projected seed norm {norm:.3e}")]
    FrameSeed { location: Vec<f64>, norm: f64 },

    #[error("singular metric at {location:?}: smallest eigenvalue {eig:.3e}")]
    SingularMetric { location: Vec<f64>, eig: f64 },

    #[error("cone boundary: coefficient {coefficient:.3e} below floor {floor:.3e}")]
    ConeBoundary { coefficient: f64, floor: f64 },

    #[error("decomposition guard exceeded: {value:.4e} > sigma1 = {sigma1:.4e}")]
    Guard { value: f64, sigma1: f64 },

    #[error("solver failure: {detail} (first failing points {points:?})")]
    SolverFailure { detail: String, points: Vec<Vec<f64>> },

    #[error("ill-conditioned Jacobian: condition {condition:.3e}")]
    IllConditioned { condition: f64 },

    #[error("Källén iteration diverged at step {step}")]
    Divergence { step: usize },

    #[error("stage hypothesis violated: {detail} at {location:?}")]
    Hypothesis { detail: String, location: Vec<f64> },

    #[error("ledger mismatch in {identity}: residual {residual:.3e} exceeds {tolerance:.3e} at {location:?}")]
    LedgerMismatch {
        identity: String,
        residual: f64,
        tolerance: f64,
        location: Vec<f64>,
    },

    #[error("schedule infeasible: {}", .0.join("; "))]
    Infeasible(Vec<String>),

    #[error("stage {q} aborted: {source}")]
    StageAbort {
        q: usize,
        #[source]
        source: Box<Error>,
        partial: Option<Box<serde_json::Value>>,
    },

    #[error("container format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse: {0}")]
    Toml(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
