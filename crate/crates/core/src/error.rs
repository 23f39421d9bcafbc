use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("found more than two distinct labels ({0} seen)")]
    LabelCardinality(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("class {0} has no training points")]
    ClassMissing(&'static str),

    #[error("no code at depth {0}")]
    DepthNotFound(usize),

    #[error("depth 0 holds the tree roots and is not a usable code")]
    RootDepth,

    #[error("length budget {budget} is smaller than the shortest code ({shortest} nodes)")]
    BudgetTooSmall { budget: usize, shortest: usize },

    #[error("only {available} candidate nodes remain, {k} required")]
    InsufficientCandidates { available: usize, k: usize },

    #[error("budget of {budget} is below the required minimum of {required}")]
    InsufficientBudget { budget: usize, required: usize },

    #[error("AUC undefined: test set lacks a {0} example")]
    UndefinedAuc(&'static str),

    #[error("relative error undefined: exact RMSE is zero")]
    UndefinedRelativeError,

    #[error("training diverged at feature {feature}, epoch {epoch}")]
    Divergence { feature: usize, epoch: usize },

    #[error("{possible} possible points cannot hold {points} training points; a cell volume of at most {max_cell_volume:e} is required")]
    CellTooCoarse {
        possible: u64,
        points: u64,
        max_cell_volume: f64,
    },

    #[error("elasticity assumptions not declared: {0}")]
    AssumptionRequired(&'static str),

    #[error("clock resolution too coarse: zero elapsed time measured")]
    ClockResolution,

    #[error("malformed codebook: {0}")]
    Codebook(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
