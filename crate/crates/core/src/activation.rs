//! Bidirectional activation engine.
//!
//! A pass emits activation top-down from a source document to its words,
//! `e(w) = tf_s(w) / len_s`, and collects it bottom-up on every article:
//!
//! ```text
//! A_s(d) = m(d) * sum_w e(w) * m(w) * wt(w) * tf_d(w)
//! ```
//!
//! Collection walks the word -> article posting lists. Sentence and
//! paragraph nodes only matter for traces. All sums are exact and rounded
//! once, so results are bit-identical for any summation order or partition.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::node_tokens;
use crate::kb::{Attention, KnowledgeBase, Level, NodeId};
use crate::num::{exact_sum, ExactSum};

/// What to emit activation from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceRef {
    Article(NodeId),
    /// External text, segmented with the knowledge base's rules.
    Text(String),
}

/// A source resolved against a knowledge base: its KB words with term
/// frequencies, plus the total token count including unknown words.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    /// Set when the source is an indexed article.
    pub article: Option<NodeId>,
    /// Known words sorted by id.
    pub terms: Vec<(NodeId, u32)>,
    /// Distinct tokens not present in the knowledge base.
    pub unknown_words: usize,
    /// Total token count `len_s`.
    pub len: u64,
}

impl Source {
    pub fn resolve(source: &SourceRef, kb: &KnowledgeBase) -> Result<Source> {
        match source {
            SourceRef::Article(id) => Self::from_article(*id, kb),
            SourceRef::Text(text) => Self::from_text(text, kb),
        }
    }

    pub fn from_article(id: NodeId, kb: &KnowledgeBase) -> Result<Source> {
        let stats = kb.article_stats(id)?;
        Ok(Source {
            article: Some(id),
            terms: stats.terms.clone(),
            unknown_words: 0,
            len: stats.len,
        })
    }

    pub fn from_text(text: &str, kb: &KnowledgeBase) -> Result<Source> {
        let rules = kb.rules();
        let tokens: Vec<String> = rules.segment(text).into_iter().flatten().flatten().collect();
        Self::from_tokens(&tokens, kb)
    }

    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], kb: &KnowledgeBase) -> Result<Source> {
        if tokens.is_empty() {
            return Err(Error::EmptySource);
        }
        let mut known: BTreeMap<NodeId, u32> = BTreeMap::new();
        let mut unknown = std::collections::HashSet::new();
        for t in tokens {
            match kb.word(t.as_ref()) {
                Some(w) => *known.entry(w).or_default() += 1,
                None => {
                    unknown.insert(t.as_ref());
                }
            }
        }
        Ok(Source {
            article: None,
            terms: known.into_iter().collect(),
            unknown_words: unknown.len(),
            len: tokens.len() as u64,
        })
    }

    pub fn tf(&self, word: NodeId) -> u32 {
        self.terms
            .binary_search_by_key(&word, |&(w, _)| w)
            .map(|i| self.terms[i].1)
            .unwrap_or(0)
    }
}

/// Emission values of one source, sorted by word id.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationVector {
    pub entries: Vec<(NodeId, f64)>,
    pub unknown_words: usize,
}

impl ActivationVector {
    pub fn get(&self, word: NodeId) -> f64 {
        self.entries
            .binary_search_by_key(&word, |&(w, _)| w)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Collected activation per article. Zero activations are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationMap {
    values: BTreeMap<NodeId, f64>,
}

impl ActivationMap {
    pub fn get(&self, article: NodeId) -> f64 {
        self.values.get(&article).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `((e * m) * wt) * tf`, the single evaluation order used by every route.
#[inline]
fn unit(e: f64, m: f64, wt: f64) -> f64 {
    e * m * wt
}

pub fn emit(source: &Source) -> ActivationVector {
    let len = source.len as f64;
    ActivationVector {
        entries: source
            .terms
            .iter()
            .map(|&(w, tf)| (w, tf as f64 / len))
            .collect(),
        unknown_words: source.unknown_words,
    }
}

pub fn collect(av: &ActivationVector, kb: &KnowledgeBase, attention: &Attention) -> ActivationMap {
    collect_partitioned(av, kb, attention, 1)
}

/// Collection split into `partitions` contiguous word ranges processed in
/// parallel; partial sums merge exactly, so the partition count never
/// changes a bit of the output.
pub fn collect_partitioned(
    av: &ActivationVector,
    kb: &KnowledgeBase,
    attention: &Attention,
    partitions: usize,
) -> ActivationMap {
    let partitions = partitions.max(1);
    let chunk = av.entries.len().div_ceil(partitions).max(1);
    let partials: Vec<HashMap<NodeId, ExactSum>> = av
        .entries
        .par_chunks(chunk)
        .map(|words| {
            let mut acc: HashMap<NodeId, ExactSum> = HashMap::new();
            for &(w, e) in words {
                let f = unit(e, attention.get(w), kb.weight(w));
                if f == 0.0 {
                    continue;
                }
                for &(d, tf) in kb.postings(w) {
                    acc.entry(d).or_default().add(f * tf as f64);
                }
            }
            acc
        })
        .collect();

    let mut merged: BTreeMap<NodeId, ExactSum> = BTreeMap::new();
    for part in partials {
        for (d, sum) in part {
            merged.entry(d).or_default().merge(&sum);
        }
    }
    let values = merged
        .into_iter()
        .filter_map(|(d, sum)| {
            let value = attention.get(d) * sum.value();
            (value != 0.0).then_some((d, value))
        })
        .collect();
    ActivationMap { values }
}

/// Activation emitted by `from` and collected on the token bag of `to`.
/// The collecting side's article multiplier applies when `to` is an article.
pub fn directed(from: &Source, to: &Source, kb: &KnowledgeBase, attention: &Attention) -> f64 {
    let len = from.len as f64;
    let mut acc = ExactSum::new();
    let (mut i, mut j) = (0, 0);
    while i < from.terms.len() && j < to.terms.len() {
        let (wf, tf_from) = from.terms[i];
        let (wt_, tf_to) = to.terms[j];
        match wf.cmp(&wt_) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let e = tf_from as f64 / len;
                acc.add(unit(e, attention.get(wf), kb.weight(wf)) * tf_to as f64);
                i += 1;
                j += 1;
            }
        }
    }
    let m = to.article.map_or(1.0, |d| attention.get(d));
    m * acc.value()
}

/// Activation of a source collected on its own token bag (no article
/// multiplier). Zero means the source shares no vocabulary with the KB.
pub fn self_activation(source: &Source, kb: &KnowledgeBase, attention: &Attention) -> f64 {
    let len = source.len as f64;
    exact_sum(source.terms.iter().map(|&(w, tf)| {
        unit(tf as f64 / len, attention.get(w), kb.weight(w)) * tf as f64
    }))
}

/// One complete down-up pass with the attention snapshot it used.
#[derive(Debug, Clone)]
pub struct ActivationPass {
    pub source: Source,
    pub vector: ActivationVector,
    pub map: ActivationMap,
    pub attention: Arc<Attention>,
}

impl ActivationPass {
    pub fn run(source: Source, kb: &KnowledgeBase, attention: Arc<Attention>, partitions: usize) -> Self {
        let vector = emit(&source);
        let map = collect_partitioned(&vector, kb, &attention, partitions);
        Self {
            source,
            vector,
            map,
            attention,
        }
    }

    /// Emission times multiplier times weight for a word.
    pub fn word_signal(&self, word: NodeId, kb: &KnowledgeBase) -> f64 {
        unit(self.vector.get(word), self.attention.get(word), kb.weight(word))
    }
}

pub fn activate(source: &SourceRef, kb: &KnowledgeBase) -> Result<ActivationPass> {
    let source = Source::resolve(source, kb)?;
    Ok(ActivationPass::run(source, kb, kb.attention(), 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub node: NodeId,
    pub level: Level,
    pub contribution: f64,
}

/// Contribution of every `level` node inside `article` to the source's
/// activation of that article, before the article multiplier. Sorted
/// descending, ties by node id, truncated to `top_n`.
pub fn trace(
    source: &Source,
    article: NodeId,
    level: Level,
    top_n: usize,
    kb: &KnowledgeBase,
    attention: &Attention,
) -> Result<Vec<TraceEntry>> {
    let node = kb.node(article)?;
    if node.level != Level::ARTICLE {
        return Err(Error::WrongLevel {
            id: article,
            expected: Level::ARTICLE,
            found: node.level,
        });
    }
    let vector = emit(source);
    // Descendants at the requested level with their multiplicity in the article.
    let mut frontier: BTreeMap<NodeId, u64> = BTreeMap::from([(article, 1)]);
    let mut current = Level::ARTICLE;
    while current > level {
        let mut next: BTreeMap<NodeId, u64> = BTreeMap::new();
        for (n, mult) in frontier {
            for &(c, m) in &kb.node(n)?.children {
                *next.entry(c).or_default() += mult * m as u64;
            }
        }
        frontier = next;
        current = current.below().expect("levels above word");
    }

    let mut entries: Vec<TraceEntry> = frontier
        .into_iter()
        .map(|(n, mult)| {
            let terms = if level == Level::WORD {
                vec![(n, 1)]
            } else {
                kb.word_counts(n)
            };
            let contribution = exact_sum(terms.into_iter().map(|(w, tf)| {
                unit(vector.get(w), attention.get(w), kb.weight(w)) * (tf as u64 * mult) as f64
            }));
            TraceEntry {
                node: n,
                level,
                contribution,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.contribution
            .total_cmp(&a.contribution)
            .then(a.node.cmp(&b.node))
    });
    entries.truncate(top_n);
    Ok(entries)
}

/// Text of a traced node, tokens joined by spaces.
pub fn trace_text(node: NodeId, kb: &KnowledgeBase) -> Result<String> {
    Ok(node_tokens(node, kb)?.join(" "))
}
