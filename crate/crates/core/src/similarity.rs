//! Candidate selection and asymmetric scoring.
//!
//! The forward pass from the query gives `T(d)` for every article; the top
//! `K` articles by `T` become candidates and each gets a reverse pass `S(c)`
//! collected on the query's own bag. The pair combines as `S * ln(1 + T)` and
//! is reported as a percentage of the query's self score.

use std::sync::Arc;

use rayon::prelude::*;

use crate::activation::{directed, self_activation, ActivationPass, Source, SourceRef};
use crate::error::{Error, Result};
use crate::kb::{Attention, KnowledgeBase, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    /// Target-to-solution activation.
    pub t: f64,
    /// Solution-to-target activation.
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineMode {
    /// `S * ln(1 + T)`.
    #[default]
    LogOnePlus,
    /// `S * ln(T)`. Negative for `T < 1` and `-inf`/NaN at `T = 0`; only for
    /// experiments.
    Literal,
}

pub fn combine(pair: ScorePair, mode: CombineMode) -> f64 {
    match mode {
        CombineMode::LogOnePlus => pair.s * pair.t.ln_1p(),
        CombineMode::Literal => pair.s * pair.t.ln(),
    }
}

pub fn normalize(raw: f64, self_raw: f64) -> Result<f64> {
    if self_raw.is_nan() || self_raw <= 0.0 {
        return Err(Error::Unscorable { unknown_words: 0 });
    }
    Ok(raw / self_raw * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankConfig {
    /// Candidate count K.
    pub candidates: usize,
    /// Result count N.
    pub results: usize,
    pub exclude_self: bool,
    pub combine: CombineMode,
    /// Word partitions for the forward collection.
    pub partitions: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            candidates: 100,
            results: 10,
            exclude_self: true,
            combine: CombineMode::default(),
            partitions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub article: NodeId,
    pub label: String,
    pub title: Option<String>,
    pub percent: f64,
    pub pair: ScorePair,
    pub raw: f64,
}

/// Scores articles against one query under a fixed attention snapshot.
#[derive(Debug, Clone)]
pub struct Scorer<'kb> {
    kb: &'kb KnowledgeBase,
    pass: ActivationPass,
    self_raw: f64,
    mode: CombineMode,
}

impl<'kb> Scorer<'kb> {
    pub fn new(query: Source, kb: &'kb KnowledgeBase, attention: Arc<Attention>, mode: CombineMode) -> Result<Self> {
        Self::with_partitions(query, kb, attention, mode, 1)
    }

    pub fn with_partitions(
        query: Source,
        kb: &'kb KnowledgeBase,
        attention: Arc<Attention>,
        mode: CombineMode,
        partitions: usize,
    ) -> Result<Self> {
        if kb.article_count() == 0 {
            return Err(Error::EmptyKnowledgeBase);
        }
        let self_act = self_activation(&query, kb, &attention);
        let self_raw = combine(ScorePair { t: self_act, s: self_act }, mode);
        if self_raw.is_nan() || self_raw <= 0.0 {
            return Err(Error::Unscorable {
                unknown_words: query.unknown_words,
            });
        }
        let pass = ActivationPass::run(query, kb, attention, partitions);
        Ok(Self {
            kb,
            pass,
            self_raw,
            mode,
        })
    }

    pub fn pass(&self) -> &ActivationPass {
        &self.pass
    }

    pub fn query(&self) -> &Source {
        &self.pass.source
    }

    /// Combined self score used as the 100% reference.
    pub fn self_raw(&self) -> f64 {
        self.self_raw
    }

    /// Top-`k` articles by forward activation, ties by label.
    pub fn candidates(&self, k: usize, exclude_self: bool) -> Vec<(NodeId, f64)> {
        let own = self.pass.source.article.filter(|_| exclude_self);
        let mut cands: Vec<(NodeId, f64)> = self
            .pass
            .map
            .iter()
            .filter(|(d, _)| Some(*d) != own)
            .collect();
        cands.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.kb.label(a.0).cmp(&self.kb.label(b.0)))
        });
        cands.truncate(k);
        cands
    }

    /// Full score of one article. Articles outside the forward map have
    /// `T = 0` and score exactly 0.
    pub fn score(&self, article: NodeId) -> Result<RankedResult> {
        let target = Source::from_article(article, self.kb)?;
        let t = self.pass.map.get(article);
        let s = directed(&target, &self.pass.source, self.kb, &self.pass.attention);
        let pair = ScorePair { t, s };
        let raw = combine(pair, self.mode);
        let percent = normalize(raw, self.self_raw)?;
        Ok(RankedResult {
            article,
            label: self.kb.label(article).unwrap_or_default().to_string(),
            title: self.kb.title(article).map(str::to_string),
            percent,
            pair,
            raw,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Ranking<'kb> {
    pub results: Vec<RankedResult>,
    pub scorer: Scorer<'kb>,
}

pub fn sort_results(results: &mut [RankedResult]) {
    results.sort_by(|a, b| b.percent.total_cmp(&a.percent).then_with(|| a.label.cmp(&b.label)));
}

pub fn rank<'kb>(query: &SourceRef, kb: &'kb KnowledgeBase, config: &RankConfig) -> Result<Ranking<'kb>> {
    let source = Source::resolve(query, kb)?;
    rank_source(source, kb, kb.attention(), config)
}

pub fn rank_source<'kb>(
    query: Source,
    kb: &'kb KnowledgeBase,
    attention: Arc<Attention>,
    config: &RankConfig,
) -> Result<Ranking<'kb>> {
    if config.results == 0 || config.candidates < config.results {
        return Err(Error::InvalidParameters(format!(
            "need candidates >= results >= 1, got K={} N={}",
            config.candidates, config.results
        )));
    }
    let scorer = Scorer::with_partitions(query, kb, attention, config.combine, config.partitions)?;
    let candidates = scorer.candidates(config.candidates, config.exclude_self);
    let mut results = candidates
        .par_iter()
        .map(|&(d, _)| scorer.score(d))
        .collect::<Result<Vec<_>>>()?;
    sort_results(&mut results);
    results.truncate(config.results);
    Ok(Ranking { results, scorer })
}

/// Both directions between two sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// Activation from `a` collected on `b`.
    pub a_to_b: f64,
    /// Activation from `b` collected on `a`.
    pub b_to_a: f64,
    /// `combine(S = b_to_a, T = a_to_b)`.
    pub raw: f64,
    /// `raw` as a percentage of `a`'s self score.
    pub percent: f64,
}

pub fn compare(a: &Source, b: &Source, kb: &KnowledgeBase, mode: CombineMode) -> Result<Comparison> {
    let attention = kb.attention();
    let self_act = self_activation(a, kb, &attention);
    let self_raw = combine(ScorePair { t: self_act, s: self_act }, mode);
    if self_raw.is_nan() || self_raw <= 0.0 {
        return Err(Error::Unscorable {
            unknown_words: a.unknown_words,
        });
    }
    let a_to_b = directed(a, b, kb, &attention);
    let b_to_a = directed(b, a, kb, &attention);
    let raw = combine(ScorePair { t: a_to_b, s: b_to_a }, mode);
    Ok(Comparison {
        a_to_b,
        b_to_a,
        raw,
        percent: normalize(raw, self_raw)?,
    })
}
