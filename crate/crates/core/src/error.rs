use std::path::PathBuf;

use thiserror::Error;

use crate::kb::{Level, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layering violation: {parent} node cannot contain {child} ({child_level} node)")]
    LayeringViolation {
        parent: Level,
        child: NodeId,
        child_level: Level,
    },
    #[error("unknown node {0}")]
    MissingNode(NodeId),
    #[error("{0} nodes require a label")]
    MissingLabel(Level),
    #[error("word nodes cannot have children")]
    WordWithChildren,
    #[error("{0} node needs at least one child")]
    EmptyNode(Level),
    #[error("child multiplicity must be positive")]
    ZeroMultiplicity,
    #[error("node {id} is a {found} node, expected {expected}")]
    WrongLevel {
        id: NodeId,
        expected: Level,
        found: Level,
    },
    #[error("attention multiplier must be finite and non-negative, got {0}")]
    InvalidMultiplier(f64),
    #[error("attention applies to word and article nodes, not {0} nodes")]
    AttentionLevel(Level),
    #[error("word weights are stale; run compute_weights first")]
    StaleWeights,
    #[error("knowledge base has no articles")]
    EmptyKnowledgeBase,

    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("document {0:?} is empty after segmentation")]
    EmptyDocument(String),
    #[error("document id must not be empty")]
    EmptyDocumentId,
    #[error("no ingestable documents in corpus")]
    NoDocuments,

    #[error("source has no tokens")]
    EmptySource,
    #[error("query shares no vocabulary with the knowledge base ({unknown_words} unknown words)")]
    Unscorable { unknown_words: usize },
    #[error("unknown article {0:?}")]
    UnknownArticle(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("unsupported index format {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("generator produced no candidate")]
    NoCandidate,
    #[error("exit criteria need at least one finite bound")]
    UnboundedLoop,
    #[error("unresolved watch label {0:?}")]
    UnresolvedLabel(String),

    #[error("invalid demonstration at step {step}: delta ({dx}, {dy}) is neither a unit move nor a known action")]
    InvalidDemonstration { step: usize, dx: i64, dy: i64 },
    #[error("demonstration needs at least two states")]
    ShortDemonstration,
    #[error("no actions known")]
    NoActions,
    #[error("unknown action {0:?}")]
    UnknownAction(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            line,
            message: message.into(),
        }
    }
}
