//! Layered compositional knowledge base with bidirectional activation
//! document similarity and a generic solution-critic loop.
//!
//! Documents are decomposed into words, sentences, paragraphs and articles.
//! Comparing two documents propagates activation top-down from one and
//! bottom-up into the other, in both directions; the two values are
//! combined into an asymmetric score.

pub mod activation;
pub mod cli;
pub mod error;
pub mod format;
pub mod ingest;
pub mod kb;
pub mod num;
pub mod scl;
pub mod seqdemo;
pub mod similarity;

pub use activation::{activate, ActivationMap, ActivationPass, ActivationVector, Source, SourceRef, TraceEntry};
pub use error::{Error, Result};
pub use format::{load_index, read_index, save_index, write_index, FORMAT_VERSION};
pub use ingest::{build, ingest_document, load_corpus, reconstruct, segment, tokenize, RawDocument, TokenizationRules};
pub use kb::{Attention, KnowledgeBase, Level, NodeId};
pub use similarity::{combine, normalize, rank, CombineMode, RankConfig, RankedResult, ScorePair};
