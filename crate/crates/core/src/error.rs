use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("layer {layer} ({kind}) is not supported by {operation}")]
    UnsupportedLayer {
        layer: usize,
        kind: &'static str,
        operation: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("level {level} out of range 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("pruning roadmap exhausted after {levels} levels")]
    RoadmapExhausted { levels: usize },

    #[error("resource infeasible: smallest descendants of {apps:?} need {required} bytes, budget is {budget}")]
    ResourceInfeasible {
        apps: Vec<String>,
        required: u64,
        budget: u64,
    },

    #[error("instance too large for exhaustive search: {size} candidates exceeds limit {limit}")]
    InstanceTooLarge { size: u128, limit: u128 },

    #[error("profile invariant violated: {0}")]
    ProfileInvariant(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
