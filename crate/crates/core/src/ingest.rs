//! Text segmentation, hierarchy construction and top-down reconstruction.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, Level, NodeId};

pub type Sentence = Vec<String>;
pub type Paragraph = Vec<Sentence>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub title: Option<String>,
    pub body: String,
}

impl RawDocument {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: None,
            body: body.into(),
        }
    }
}

/// Segmentation rules. Tokens are maximal runs of Unicode letters and
/// digits; sentences end after `.`, `!` or `?`; paragraphs are separated by
/// one or more blank lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizationRules {
    pub lowercase: bool,
    /// Minimum token length in characters.
    pub min_token_len: usize,
}

impl Default for TokenizationRules {
    fn default() -> Self {
        Self {
            lowercase: true,
            min_token_len: 1,
        }
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

impl TokenizationRules {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        self.tokenize_into(text, &mut tokens);
        tokens
    }

    fn tokenize_into(&self, text: &str, out: &mut Vec<String>) {
        for run in text.split(|c: char| !c.is_alphanumeric()) {
            if run.is_empty() || run.chars().count() < self.min_token_len {
                continue;
            }
            out.push(if self.lowercase {
                run.to_lowercase()
            } else {
                run.to_string()
            });
        }
    }

    pub fn segment(&self, text: &str) -> Vec<Paragraph> {
        let mut paragraphs = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                self.flush_paragraph(&mut current, &mut paragraphs);
            } else {
                current.push(line);
            }
        }
        self.flush_paragraph(&mut current, &mut paragraphs);
        paragraphs
    }

    fn flush_paragraph(&self, lines: &mut Vec<&str>, out: &mut Vec<Paragraph>) {
        if lines.is_empty() {
            return;
        }
        let text = lines.join("\n");
        lines.clear();
        let mut sentences = Vec::new();
        for piece in text.split_inclusive(is_terminator) {
            let mut tokens = Vec::new();
            self.tokenize_into(piece, &mut tokens);
            if !tokens.is_empty() {
                sentences.push(tokens);
            }
        }
        if !sentences.is_empty() {
            out.push(sentences);
        }
    }
}

/// Tokenizes with the default rules.
pub fn tokenize(text: &str) -> Vec<String> {
    TokenizationRules::default().tokenize(text)
}

/// Segments with the default rules.
pub fn segment(text: &str) -> Vec<Paragraph> {
    TokenizationRules::default().segment(text)
}

/// Segments `doc` with the knowledge base's rules and inserts it.
/// Weights become stale until [`compute_weights`] runs.
pub fn ingest_document(doc: &RawDocument, kb: &mut KnowledgeBase) -> Result<NodeId> {
    let paragraphs = kb.rules().segment(&doc.body);
    ingest_segmented(&doc.id, doc.title.as_deref(), &paragraphs, kb)
}

/// Inserts an already segmented document.
pub fn ingest_segmented(
    id: &str,
    title: Option<&str>,
    paragraphs: &[Paragraph],
    kb: &mut KnowledgeBase,
) -> Result<NodeId> {
    if id.is_empty() {
        return Err(Error::EmptyDocumentId);
    }
    if kb.article(id).is_some() {
        return Err(Error::DuplicateDocument(id.to_string()));
    }
    if paragraphs.iter().flatten().all(|s| s.is_empty()) {
        return Err(Error::EmptyDocument(id.to_string()));
    }
    let mut paragraph_ids = Vec::with_capacity(paragraphs.len());
    for paragraph in paragraphs {
        let mut sentence_ids = Vec::with_capacity(paragraph.len());
        for sentence in paragraph.iter().filter(|s| !s.is_empty()) {
            let runs = run_length(sentence, kb)?;
            sentence_ids.push((kb.add_node(Level::SENTENCE, None, &runs)?, 1));
        }
        if !sentence_ids.is_empty() {
            paragraph_ids.push((kb.add_node(Level::PARAGRAPH, None, &sentence_ids)?, 1));
        }
    }
    let article = kb.add_node(Level::ARTICLE, Some(id), &paragraph_ids)?;
    kb.set_title(article, title.map(str::to_string));
    Ok(article)
}

fn run_length(tokens: &[String], kb: &mut KnowledgeBase) -> Result<Vec<(NodeId, u32)>> {
    let mut runs: Vec<(NodeId, u32)> = Vec::new();
    for token in tokens {
        let word = kb.add_node(Level::WORD, Some(token), &[])?;
        match runs.last_mut() {
            Some((last, count)) if *last == word => *count += 1,
            _ => runs.push((word, 1)),
        }
    }
    Ok(runs)
}

pub fn compute_weights(kb: &mut KnowledgeBase) -> Result<()> {
    kb.compute_weights()
}

/// Regenerates the nested token structure of an article from the graph.
pub fn reconstruct(article: NodeId, kb: &KnowledgeBase) -> Result<Vec<Paragraph>> {
    let node = kb.node(article)?;
    if node.level != Level::ARTICLE {
        return Err(Error::WrongLevel {
            id: article,
            expected: Level::ARTICLE,
            found: node.level,
        });
    }
    let mut paragraphs = Vec::new();
    for &(p, pm) in &node.sequence {
        for _ in 0..pm {
            let mut sentences = Vec::new();
            for &(s, sm) in &kb.node(p)?.sequence {
                for _ in 0..sm {
                    sentences.push(sentence_tokens(s, kb)?);
                }
            }
            paragraphs.push(sentences);
        }
    }
    Ok(paragraphs)
}

pub(crate) fn sentence_tokens(sentence: NodeId, kb: &KnowledgeBase) -> Result<Sentence> {
    let mut tokens = Vec::new();
    for &(w, count) in &kb.node(sentence)?.sequence {
        let token = kb.label(w).unwrap_or_default();
        tokens.extend(std::iter::repeat_n(token.to_string(), count as usize));
    }
    Ok(tokens)
}

/// Tokens of any non-word node in surface order.
pub fn node_tokens(id: NodeId, kb: &KnowledgeBase) -> Result<Vec<String>> {
    let node = kb.node(id)?;
    if node.level == Level::WORD {
        return Ok(vec![node.label.clone().unwrap_or_default()]);
    }
    if node.level == Level::SENTENCE {
        return sentence_tokens(id, kb);
    }
    let mut out = Vec::new();
    for &(child, count) in &node.sequence {
        let tokens = node_tokens(child, kb)?;
        for _ in 0..count {
            out.extend(tokens.iter().cloned());
        }
    }
    Ok(out)
}

/// Result of building a knowledge base from a corpus.
#[derive(Debug)]
pub struct Build {
    pub kb: KnowledgeBase,
    /// Ids of documents that were empty after segmentation.
    pub skipped: Vec<String>,
}

/// Builds a weighted knowledge base. Segmentation runs in parallel; graph
/// insertion is one sequential pass in document-id order, so the result does
/// not depend on the input order or the thread schedule.
pub fn build(mut docs: Vec<RawDocument>, rules: TokenizationRules) -> Result<Build> {
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(dup) = docs.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::DuplicateDocument(dup[0].id.clone()));
    }
    let segmented: Vec<Vec<Paragraph>> = docs.par_iter().map(|d| rules.segment(&d.body)).collect();

    let mut kb = KnowledgeBase::new(rules);
    let mut skipped = Vec::new();
    for (doc, paragraphs) in docs.iter().zip(&segmented) {
        match ingest_segmented(&doc.id, doc.title.as_deref(), paragraphs, &mut kb) {
            Ok(_) => {}
            Err(Error::EmptyDocument(id)) => skipped.push(id),
            Err(e) => return Err(e),
        }
    }
    if kb.article_count() == 0 {
        return Err(Error::NoDocuments);
    }
    kb.compute_weights()?;
    Ok(Build { kb, skipped })
}

#[derive(Deserialize)]
struct CorpusLine {
    id: String,
    #[serde(default)]
    title: Option<String>,
    text: String,
}

/// Loads a corpus from a directory of `*.txt` files (stem = id) or a JSONL
/// file with `{"id", "title"?, "text"}` objects.
pub fn load_corpus(path: &Path) -> Result<Vec<RawDocument>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_dir() {
        load_directory(path)
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_jsonl(&text)
    }
}

fn load_directory(dir: &Path) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || path.extension().is_none_or(|ext| ext != "txt") {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        docs.push(RawDocument::new(id, body));
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(docs)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<RawDocument>> {
    let mut docs: Vec<RawDocument> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusLine =
            serde_json::from_str(line).map_err(|e| Error::malformed(line_no, e.to_string()))?;
        if record.id.is_empty() {
            return Err(Error::malformed(line_no, "empty document id"));
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::malformed(
                line_no,
                format!("duplicate document id {:?}", record.id),
            ));
        }
        docs.push(RawDocument {
            id: record.id,
            title: record.title,
            body: record.text,
        });
    }
    Ok(docs)
}
