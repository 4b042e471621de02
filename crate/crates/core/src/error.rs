use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("token {0} is not a CTC label")]
    NotCtcLabel(u32),

    #[error("forward state covers frames up to {covered}, need {needed}")]
    StateNotAdvanced { covered: usize, needed: usize },

    #[error("target length {target} is shorter than grid length {frames}")]
    PadTooShort { target: usize, frames: usize },

    #[error("scorer returned a vector with {got} entries, expected {expected}")]
    ScorerShape { expected: usize, got: usize },

    #[error("scorer output not normalized: logsumexp={0:+.3e}")]
    ScorerNotNormalized(f64),

    #[error("malformed table: {0}")]
    MalformedTable(String),

    #[error("oracle instance too large: (vocab {vocab})^{frames} alignments")]
    OracleTooLarge { vocab: usize, frames: usize },

    #[error("empty window list")]
    EmptyWindows,

    #[error("node index {index} out of range for {width} outputs")]
    NodeOutOfRange { index: usize, width: usize },

    #[error("invalid node map: {0}")]
    InvalidNodeMap(String),

    #[error("undefined rate: empty reference with non-empty hypothesis")]
    UndefinedRate,

    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn for_utterance(self, id: &str) -> Self {
        match self {
            e @ Error::Utterance { .. } => e,
            e => Error::Utterance {
                id: id.to_string(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
