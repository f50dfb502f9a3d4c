use thiserror::Error;

/// Errors raised by ingestion, estimation, and the analysis drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unknown metric `{0}` (expected one of fnr, fpr, ppv, npv, selection_rate, error_rate)")]
    UnknownMetric(String),

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("{metric} is undefined for group `{group}`: empty cell {cell}")]
    UndefinedMetric {
        metric: String,
        group: String,
        cell: String,
    },

    #[error("true group labels are required for {0}")]
    MissingLabels(&'static str),

    #[error("empty conditioning cell {cell} for {metric}, group `{group}`")]
    EmptyCell {
        metric: String,
        group: String,
        cell: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible sensitivity range: {0}")]
    InfeasibleRange(String),

    #[error("model fit failed: {0}")]
    Convergence(String),

    #[error("missing prevalence for group(s): {0}")]
    MissingPrevalence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
