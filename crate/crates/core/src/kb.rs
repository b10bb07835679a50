//! Layered compositional knowledge base.
//!
//! Words compose sentences, sentences compose paragraphs and paragraphs
//! compose articles. Every edge points exactly one level down, so the graph
//! is acyclic by construction. Word nodes are shared across the corpus; all
//! other nodes belong to the document that created them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::ingest::TokenizationRules;

/// Level names, lowest first. The article level is always the last entry.
pub const LEVEL_NAMES: [&str; 4] = ["word", "sentence", "paragraph", "article"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Level(u8);

impl Level {
    pub const WORD: Level = Level(0);
    pub const SENTENCE: Level = Level(1);
    pub const PARAGRAPH: Level = Level(2);
    pub const ARTICLE: Level = Level(LEVEL_NAMES.len() as u8 - 1);

    pub fn from_ordinal(ordinal: u8) -> Option<Level> {
        ((ordinal as usize) < LEVEL_NAMES.len()).then_some(Level(ordinal))
    }

    pub fn from_name(name: &str) -> Option<Level> {
        LEVEL_NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| Level(i as u8))
    }

    pub fn ordinal(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        LEVEL_NAMES[self.0 as usize]
    }

    /// The level directly below, `None` for words.
    pub fn below(self) -> Option<Level> {
        self.0.checked_sub(1).map(Level)
    }

    pub fn all() -> impl Iterator<Item = Level> {
        (0..LEVEL_NAMES.len() as u8).map(Level)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dense node identifier, assigned in insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub level: Level,
    pub label: Option<String>,
    pub weight: f64,
    /// Distinct children with their total multiplicity, in first-seen order.
    pub children: Vec<(NodeId, u32)>,
    /// Children in surface order as run-length pairs; may repeat a child.
    pub sequence: Vec<(NodeId, u32)>,
}

/// Per-article word statistics derived from the graph.
#[derive(Debug, Clone)]
pub struct ArticleStats {
    pub title: Option<String>,
    /// Term frequencies sorted by word id.
    pub terms: Vec<(NodeId, u32)>,
    pub len: u64,
}

/// Per-node attention multipliers; absent entries mean 1.0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Attention {
    multipliers: HashMap<NodeId, f64>,
}

impl Attention {
    pub fn get(&self, id: NodeId) -> f64 {
        self.multipliers.get(&id).copied().unwrap_or(1.0)
    }

    pub fn is_identity(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub(crate) fn set(&mut self, id: NodeId, multiplier: f64) {
        if multiplier == 1.0 {
            self.multipliers.remove(&id);
        } else {
            self.multipliers.insert(id, multiplier);
        }
    }
}

pub(crate) fn check_multiplier(multiplier: f64) -> Result<()> {
    if multiplier.is_finite() && multiplier >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidMultiplier(multiplier))
    }
}

pub struct KnowledgeBase {
    nodes: Vec<Node>,
    parents: Vec<Vec<(NodeId, u32)>>,
    words: HashMap<String, NodeId>,
    articles: BTreeMap<String, NodeId>,
    article_stats: HashMap<NodeId, ArticleStats>,
    /// word -> (article, tf), ascending article id. Length is df.
    postings: HashMap<NodeId, Vec<(NodeId, u32)>>,
    total_tokens: u64,
    weights_fresh: bool,
    rules: TokenizationRules,
    attention: RwLock<Arc<Attention>>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(TokenizationRules::default())
    }
}

impl Clone for KnowledgeBase {
    fn clone(&self) -> Self {
        Self {
            nodes: self.nodes.clone(),
            parents: self.parents.clone(),
            words: self.words.clone(),
            articles: self.articles.clone(),
            article_stats: self.article_stats.clone(),
            postings: self.postings.clone(),
            total_tokens: self.total_tokens,
            weights_fresh: self.weights_fresh,
            rules: self.rules.clone(),
            attention: RwLock::new(self.attention()),
        }
    }
}

impl fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("nodes", &self.nodes.len())
            .field("words", &self.words.len())
            .field("articles", &self.articles.len())
            .field("total_tokens", &self.total_tokens)
            .finish()
    }
}

impl KnowledgeBase {
    pub fn new(rules: TokenizationRules) -> Self {
        Self {
            nodes: Vec::new(),
            parents: Vec::new(),
            words: HashMap::new(),
            articles: BTreeMap::new(),
            article_stats: HashMap::new(),
            postings: HashMap::new(),
            total_tokens: 0,
            weights_fresh: true,
            rules,
            attention: RwLock::new(Arc::new(Attention::default())),
        }
    }

    pub fn rules(&self) -> &TokenizationRules {
        &self.rules
    }

    /// Adds a node. Word labels are deduplicated: adding an existing word
    /// returns its id. Article labels must be unique.
    pub fn add_node(
        &mut self,
        level: Level,
        label: Option<&str>,
        children: &[(NodeId, u32)],
    ) -> Result<NodeId> {
        if level == Level::WORD {
            let label = label.ok_or(Error::MissingLabel(level))?;
            if !children.is_empty() {
                return Err(Error::WordWithChildren);
            }
            if let Some(&id) = self.words.get(label) {
                return Ok(id);
            }
            let id = self.push(Node {
                level,
                label: Some(label.to_string()),
                weight: 0.0,
                children: Vec::new(),
                sequence: Vec::new(),
            });
            self.words.insert(label.to_string(), id);
            self.weights_fresh = false;
            return Ok(id);
        }

        if children.is_empty() {
            return Err(Error::EmptyNode(level));
        }
        let below = level.below().expect("non-word level");
        for &(child, mult) in children {
            let node = self.node(child)?;
            if node.level != below {
                return Err(Error::LayeringViolation {
                    parent: level,
                    child,
                    child_level: node.level,
                });
            }
            if mult == 0 {
                return Err(Error::ZeroMultiplicity);
            }
        }
        if level == Level::ARTICLE {
            let label = label.ok_or(Error::MissingLabel(level))?;
            if label.is_empty() {
                return Err(Error::EmptyDocumentId);
            }
            if self.articles.contains_key(label) {
                return Err(Error::DuplicateDocument(label.to_string()));
            }
        }

        let mut aggregated: Vec<(NodeId, u32)> = Vec::new();
        for &(child, mult) in children {
            match aggregated.iter_mut().find(|(c, _)| *c == child) {
                Some(entry) => entry.1 += mult,
                None => aggregated.push((child, mult)),
            }
        }
        let id = self.push(Node {
            level,
            label: label.map(str::to_string),
            weight: 1.0,
            children: aggregated.clone(),
            sequence: children.to_vec(),
        });
        for (child, mult) in aggregated {
            self.parents[child.index()].push((id, mult));
        }

        if level == Level::ARTICLE {
            let label = label.expect("checked above");
            self.articles.insert(label.to_string(), id);
            let terms = self.word_counts(id);
            let len: u64 = terms.iter().map(|&(_, tf)| tf as u64).sum();
            for &(word, tf) in &terms {
                self.postings.entry(word).or_default().push((id, tf));
            }
            self.total_tokens += len;
            self.article_stats.insert(
                id,
                ArticleStats {
                    title: None,
                    terms,
                    len,
                },
            );
            self.weights_fresh = false;
        }
        Ok(id)
    }

    fn push(&mut self, node: Node) -> NodeId {
        let id = NodeId(u32::try_from(self.nodes.len()).expect("node id space exhausted"));
        self.nodes.push(node);
        self.parents.push(Vec::new());
        id
    }

    pub(crate) fn set_title(&mut self, article: NodeId, title: Option<String>) {
        if let Some(stats) = self.article_stats.get_mut(&article) {
            stats.title = title;
        }
    }

    /// Word multiplicities under any node, sorted by word id.
    pub fn word_counts(&self, id: NodeId) -> Vec<(NodeId, u32)> {
        let mut counts: BTreeMap<NodeId, u32> = BTreeMap::new();
        let mut stack = vec![(id, 1u32)];
        while let Some((n, mult)) = stack.pop() {
            let node = &self.nodes[n.index()];
            if node.level == Level::WORD {
                *counts.entry(n).or_default() += mult;
            } else {
                for &(c, m) in &node.children {
                    stack.push((c, mult * m));
                }
            }
        }
        counts.into_iter().collect()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.index()).ok_or(Error::MissingNode(id))
    }

    pub fn parents_of(&self, id: NodeId) -> Result<&[(NodeId, u32)]> {
        self.parents
            .get(id.index())
            .map(Vec::as_slice)
            .ok_or(Error::MissingNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn word(&self, token: &str) -> Option<NodeId> {
        self.words.get(token).copied()
    }

    pub fn article(&self, label: &str) -> Option<NodeId> {
        self.articles.get(label).copied()
    }

    /// Resolves a rule or watch label: word tokens take precedence over
    /// article labels.
    pub fn resolve_label(&self, label: &str) -> Option<NodeId> {
        self.word(label).or_else(|| self.article(label))
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.nodes.get(id.index()).and_then(|n| n.label.as_deref())
    }

    /// Article ids ordered by label.
    pub fn articles(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.articles.iter().map(|(l, &id)| (l.as_str(), id))
    }

    /// Word ids ordered by token.
    pub fn words_sorted(&self) -> Vec<(&str, NodeId)> {
        let mut words: Vec<_> = self.words.iter().map(|(t, &id)| (t.as_str(), id)).collect();
        words.sort_unstable();
        words
    }

    pub fn article_stats(&self, article: NodeId) -> Result<&ArticleStats> {
        match self.article_stats.get(&article) {
            Some(stats) => Ok(stats),
            None => {
                let found = self.node(article)?.level;
                Err(Error::WrongLevel {
                    id: article,
                    expected: Level::ARTICLE,
                    found,
                })
            }
        }
    }

    pub fn title(&self, article: NodeId) -> Option<&str> {
        self.article_stats
            .get(&article)
            .and_then(|s| s.title.as_deref())
    }

    pub fn postings(&self, word: NodeId) -> &[(NodeId, u32)] {
        self.postings.get(&word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn df(&self, word: NodeId) -> u32 {
        self.postings(word).len() as u32
    }

    /// Article count D.
    pub fn article_count(&self) -> usize {
        self.articles.len()
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn weight(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].weight
    }

    pub fn weights_fresh(&self) -> bool {
        self.weights_fresh
    }

    /// Sets word weights to `ln(1 + D/df)` and every other weight to 1.
    /// Words with no containing article get weight 0.
    pub fn compute_weights(&mut self) -> Result<()> {
        let d = self.article_count();
        if d == 0 {
            return Err(Error::EmptyKnowledgeBase);
        }
        let d = d as f64;
        for i in 0..self.nodes.len() {
            let id = NodeId(i as u32);
            let weight = if self.nodes[i].level == Level::WORD {
                match self.df(id) {
                    0 => 0.0,
                    df => (1.0 + d / df as f64).ln(),
                }
            } else {
                1.0
            };
            self.nodes[i].weight = weight;
        }
        self.weights_fresh = true;
        Ok(())
    }

    pub(crate) fn set_loaded_weight(&mut self, word: NodeId, weight: f64) {
        self.nodes[word.index()].weight = weight;
    }

    pub(crate) fn mark_weights_fresh(&mut self) {
        self.weights_fresh = true;
    }

    /// Current attention snapshot. Passes hold on to the returned `Arc`, so
    /// later rule changes never affect a pass already in flight.
    pub fn attention(&self) -> Arc<Attention> {
        self.attention.read().expect("attention lock").clone()
    }

    pub fn set_attention(&self, id: NodeId, multiplier: f64) -> Result<()> {
        self.validate_attention_target(id)?;
        check_multiplier(multiplier)?;
        let mut slot = self.attention.write().expect("attention lock");
        let mut next = Attention::clone(&slot);
        next.set(id, multiplier);
        *slot = Arc::new(next);
        Ok(())
    }

    /// Applies several multipliers as one atomic snapshot swap.
    pub fn update_attention(&self, entries: &[(NodeId, f64)]) -> Result<()> {
        for &(id, m) in entries {
            self.validate_attention_target(id)?;
            check_multiplier(m)?;
        }
        let mut slot = self.attention.write().expect("attention lock");
        let mut next = Attention::clone(&slot);
        for &(id, m) in entries {
            next.set(id, m);
        }
        *slot = Arc::new(next);
        Ok(())
    }

    pub fn clear_attention(&self) {
        *self.attention.write().expect("attention lock") = Arc::new(Attention::default());
    }

    fn validate_attention_target(&self, id: NodeId) -> Result<()> {
        let level = self.node(id)?.level;
        if level == Level::WORD || level == Level::ARTICLE {
            Ok(())
        } else {
            Err(Error::AttentionLevel(level))
        }
    }

    /// Full consistency scan: layering, parent transpose, df and D.
    pub fn verify(&self) -> std::result::Result<(), String> {
        let mut expected_parents: Vec<Vec<(NodeId, u32)>> = vec![Vec::new(); self.nodes.len()];
        for (id, node) in self.nodes() {
            for &(c, m) in &node.children {
                let child = &self.nodes[c.index()];
                if child.level.ordinal() + 1 != node.level.ordinal() {
                    return Err(format!("edge {id} -> {c} skips levels"));
                }
                expected_parents[c.index()].push((id, m));
            }
        }
        for (i, expected) in expected_parents.iter_mut().enumerate() {
            let mut actual = self.parents[i].clone();
            expected.sort_unstable();
            actual.sort_unstable();
            if *expected != actual {
                return Err(format!("parent index of #{i} is not the transpose"));
            }
        }
        let article_nodes = self
            .nodes
            .iter()
            .filter(|n| n.level == Level::ARTICLE)
            .count();
        if article_nodes != self.article_count() {
            return Err(format!(
                "D={} but {article_nodes} article nodes",
                self.article_count()
            ));
        }
        for &word in self.words.values() {
            let ancestors = self.article_ancestors(word);
            if ancestors.len() as u32 != self.df(word) {
                return Err(format!(
                    "df({word})={} but {} article ancestors",
                    self.df(word),
                    ancestors.len()
                ));
            }
        }
        Ok(())
    }

    fn article_ancestors(&self, id: NodeId) -> HashSet<NodeId> {
        let mut seen = HashSet::new();
        let mut out = HashSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            for &(p, _) in &self.parents[n.index()] {
                if seen.insert(p) {
                    if self.nodes[p.index()].level == Level::ARTICLE {
                        out.insert(p);
                    } else {
                        stack.push(p);
                    }
                }
            }
        }
        out
    }
}
