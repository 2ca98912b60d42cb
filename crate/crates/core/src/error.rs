use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GplError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GplError {
    #[error("self-loop on edge ({0}, {0})")]
    SelfLoop(usize),
    #[error("edge ({i}, {j}) has an endpoint outside 0..{n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("feature matrix has {found} rows, expected {expected}")]
    FeatureRows { expected: usize, found: usize },
    #[error("label vector has {found} entries, expected {expected}")]
    LabelCount { expected: usize, found: usize },
    #[error("no edges")]
    NoEdges,
    #[error("heterophily target {target} unreachable with {edges} edges; achievable range [{min:.4}, {max:.4}]")]
    UnreachableHeterophily {
        target: f64,
        edges: usize,
        min: f64,
        max: f64,
    },
    #[error("edge mask has {found} parameters but the graph has {expected} edges")]
    MaskMismatch { expected: usize, found: usize },
    #[error("positive set is empty")]
    EmptyPositives,
    #[error("node {0} is identified as both positive and negative")]
    ConflictingIdentified(usize),
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("score set is empty")]
    EmptyScores,
    #[error("score {0} outside [0, 1]")]
    ScoreRange(f64),
    #[error("no admissible threshold: Q_p never reaches q_floor {q_floor} (max Q_p {max_qp})")]
    NoAdmissibleThreshold { q_floor: f64, max_qp: f64 },
    #[error("both training groups are empty")]
    EmptyGroups,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("graph has no positive nodes")]
    NoPositives,
    #[error("planted graph infeasible: {0}")]
    Infeasible(String),
    #[error("non-finite value in training trace at epoch {epoch}: {what}")]
    NonFiniteTrace { epoch: usize, what: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing config key `{0}`")]
    MissingConfigKey(String),
    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GplError {
    pub(crate) fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        GplError::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GplError::Io {
            path: path.into(),
            source,
        }
    }
}
