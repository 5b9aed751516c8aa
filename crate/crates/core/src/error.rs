use thiserror::Error;

/// Errors raised by metrics, objectives, models, data handling and optimizers.
#[derive(Debug, Error)]
pub enum PaucError {
    #[error("degenerate class: {0}")]
    DegenerateClass(&'static str),

    #[error("empty FPR window: k1={k1} >= k2={k2}")]
    EmptyFprWindow { k1: usize, k2: usize },

    #[error("empty selection window: k1={k1}, k2={k2}")]
    EmptySelectionWindow { k1: usize, k2: usize },

    #[error("CVaR level not integral: n={n}, level={level}")]
    CvarLevelNotIntegral { n: usize, level: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("infeasible dataset spec: {0}")]
    InfeasibleCounts(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PaucError {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Whether the error reflects a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::NonFinite(_))
    }
}

pub type Result<T> = std::result::Result<T, PaucError>;
