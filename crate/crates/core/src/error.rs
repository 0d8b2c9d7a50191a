use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("non-finite coordinate at element {index}")]
    NonFiniteCoordinate { index: usize },

    #[error("mesh has no faces")]
    EmptyMesh,

    #[error("shape is empty")]
    EmptyShape,

    #[error("degenerate shape: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "interior sampling accepted {accepted} of {attempts} candidates; \
         the mesh is likely not watertight or too thin"
    )]
    RejectionRate { accepted: usize, attempts: usize },

    #[error("proposal has fewer than two members")]
    SingletonProposal,

    #[error("proposal has an empty negative domain")]
    EmptyComplement,

    #[error("no valid proposal")]
    NoValidProposal,

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("mask has no masked hit pixels")]
    EmptyMask,

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("loss diverged at iteration {0}")]
    Divergence(usize),

    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("fewer distinct features ({distinct}) than clusters ({k})")]
    TooFewDistinct { distinct: usize, k: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
