use thiserror::Error;

/// Errors raised by the drift engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,

    #[error("cannot compute {0} of an empty window")]
    EmptyWindow(&'static str),

    #[error("rho must lie in (0, 1], got {0}")]
    InvalidRho(f64),

    #[error("histogram bin counts differ: {0} vs {1}")]
    BinCountMismatch(usize, usize),

    #[error("histogram holds an invalid mass {0}")]
    InvalidMass(f64),

    #[error("neither histogram has mass inside the band")]
    NoComparableMass,

    #[error("memory holds no oracle-labeled records")]
    NoOracleRecords,

    #[error("record {0} has no predicted label")]
    MissingPrediction(String),

    #[error("oracle label of record {0} is already set")]
    OracleLabelSet(String),

    #[error("cannot predict with an empty model subset")]
    EmptyEnsemble,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed record: {0}")]
    Record(String),

    #[error("{malformed} of {total} input lines are malformed (limit 1%)")]
    TooManyMalformed { malformed: usize, total: usize },

    #[error("malformed metrics file: {0}")]
    Metrics(String),

    #[error("checkpoint does not match this run: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
