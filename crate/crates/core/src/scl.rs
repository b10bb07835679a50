//! Solution-critic loop.
//!
//! A generator proposes candidates, a critic scores them against the goal,
//! and the score is fed back to the generator before the next proposal. The
//! loop stops on the first satisfied exit bound. Attention rules and watched
//! node monitoring sit beside the loop.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use crate::activation::{ActivationPass, SourceRef};
use crate::error::{Error, Result};
use crate::kb::{check_multiplier, KnowledgeBase, Level, NodeId};
use crate::similarity::{RankConfig, Scorer};

/// What the generator learns about its previous proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub iteration: usize,
    pub score: f64,
    pub best_score: f64,
}

pub trait Generator {
    type Candidate: Clone + fmt::Display;

    /// Next candidate, or `None` when exhausted. `feedback` is `None` on the
    /// first call and describes the previous candidate afterwards.
    fn propose(&mut self, feedback: Option<&Feedback>) -> Option<Self::Candidate>;
}

pub trait Critic<C> {
    /// Higher is better.
    fn evaluate(&mut self, candidate: &C) -> Result<f64>;

    /// Current activation of a watched node.
    fn observe(&self, label: &str) -> Result<f64> {
        Err(Error::UnresolvedLabel(label.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitCriteria {
    pub max_iterations: Option<usize>,
    pub wall_time: Option<Duration>,
    /// Stop once a candidate scores at least this much.
    pub score_threshold: Option<f64>,
}

impl ExitCriteria {
    pub fn iterations(max: usize) -> Self {
        Self {
            max_iterations: Some(max),
            wall_time: None,
            score_threshold: None,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.score_threshold = Some(threshold);
        self
    }

    pub fn with_wall_time(mut self, budget: Duration) -> Self {
        self.wall_time = Some(budget);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidParameters("max_iterations must be at least 1".into()));
        }
        let threshold = self.score_threshold.filter(|t| t.is_finite());
        if self.max_iterations.is_none() && self.wall_time.is_none() && threshold.is_none() {
            return Err(Error::UnboundedLoop);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    Threshold,
    Iterations,
    Time,
    /// The generator ran out of candidates.
    Exhausted,
}

impl fmt::Display for ExitReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExitReason::Threshold => "threshold",
            ExitReason::Iterations => "iterations",
            ExitReason::Time => "time",
            ExitReason::Exhausted => "exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub candidate: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WatchRecord {
    pub iteration: usize,
    pub label: String,
    pub value: f64,
}

impl fmt::Display for WatchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}",
            self.iteration,
            self.label,
            crate::num::format_real(self.value)
        )
    }
}

#[derive(Debug, Clone)]
pub struct LoopReport<C> {
    pub best: C,
    pub best_score: f64,
    pub iterations: usize,
    pub exit: ExitReason,
    pub history: Vec<IterationRecord>,
    pub watch_log: Vec<WatchRecord>,
}

impl<C> LoopReport<C> {
    /// Best-so-far score after each iteration.
    pub fn best_trajectory(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.history
            .iter()
            .map(|r| {
                best = best.max(r.score);
                best
            })
            .collect()
    }
}

pub fn run<G, C>(
    generator: &mut G,
    critic: &mut C,
    exit: &ExitCriteria,
    watch: &[String],
) -> Result<LoopReport<G::Candidate>>
where
    G: Generator,
    C: Critic<G::Candidate>,
{
    exit.validate()?;
    let started = Instant::now();
    let mut history = Vec::new();
    let mut watch_log = Vec::new();
    let mut best: Option<(G::Candidate, f64)> = None;
    let mut feedback: Option<Feedback> = None;

    let reason = loop {
        let Some(candidate) = generator.propose(feedback.as_ref()) else {
            if best.is_none() {
                return Err(Error::NoCandidate);
            }
            break ExitReason::Exhausted;
        };
        let score = critic.evaluate(&candidate)?;
        let iteration = history.len() + 1;
        history.push(IterationRecord {
            candidate: candidate.to_string(),
            score,
        });
        for label in watch {
            watch_log.push(WatchRecord {
                iteration,
                label: label.clone(),
                value: critic.observe(label)?,
            });
        }
        let improved = best.as_ref().is_none_or(|(_, b)| score > *b);
        if improved {
            best = Some((candidate, score));
        }
        let best_score = best.as_ref().map(|(_, s)| *s).expect("best set");
        feedback = Some(Feedback {
            iteration,
            score,
            best_score,
        });

        if exit.score_threshold.is_some_and(|t| score >= t) {
            break ExitReason::Threshold;
        }
        if exit.max_iterations.is_some_and(|m| iteration >= m) {
            break ExitReason::Iterations;
        }
        if exit.wall_time.is_some_and(|t| started.elapsed() >= t) {
            break ExitReason::Time;
        }
    };

    let (best, best_score) = best.expect("at least one iteration");
    Ok(LoopReport {
        best,
        best_score,
        iterations: history.len(),
        exit: reason,
        history,
        watch_log,
    })
}

/// Label -> attention multiplier (amplify > 1, inhibit < 1, ban = 0).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    rules: BTreeMap<String, f64>,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: impl Into<String>, multiplier: f64) -> Result<()> {
        check_multiplier(multiplier)?;
        self.rules.insert(label.into(), multiplier);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.rules.iter().map(|(l, &m)| (l.as_str(), m))
    }

    /// Parses a JSON object mapping labels to multipliers.
    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, f64> =
            serde_json::from_str(text).map_err(|e| Error::malformed(e.line(), e.to_string()))?;
        let mut rules = RuleSet::new();
        for (label, m) in map {
            rules.insert(label, m)?;
        }
        Ok(rules)
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for RuleSet {
    /// Panics on an invalid multiplier; use [`RuleSet::insert`] for input data.
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut rules = RuleSet::new();
        for (l, m) in iter {
            rules.insert(l, m).expect("valid multiplier");
        }
        rules
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleOutcome {
    pub applied: usize,
    pub unresolved: Vec<String>,
}

/// Resolves labels and installs all multipliers as one attention snapshot.
pub fn apply_rules(rules: &RuleSet, kb: &KnowledgeBase) -> Result<RuleOutcome> {
    let mut resolved = Vec::new();
    let mut unresolved = Vec::new();
    for (label, m) in rules.iter() {
        match kb.resolve_label(label) {
            Some(id) => resolved.push((id, m)),
            None => unresolved.push(label.to_string()),
        }
    }
    kb.update_attention(&resolved)?;
    Ok(RuleOutcome {
        applied: resolved.len(),
        unresolved,
    })
}

/// Watched values from a pass: `e(w) * m(w) * wt(w)` for words and the
/// collected activation for articles.
pub fn watch_read(labels: &[String], pass: &ActivationPass, kb: &KnowledgeBase) -> Result<Vec<(String, f64)>> {
    labels
        .iter()
        .map(|label| watch_one(label, pass, kb).map(|v| (label.clone(), v)))
        .collect()
}

fn watch_one(label: &str, pass: &ActivationPass, kb: &KnowledgeBase) -> Result<f64> {
    let id = kb
        .resolve_label(label)
        .ok_or_else(|| Error::UnresolvedLabel(label.to_string()))?;
    Ok(match kb.node(id)?.level {
        Level::WORD => pass.word_signal(id, kb),
        _ => pass.map.get(id),
    })
}

/// Document comparison as a loop: candidates are the query's top-K
/// articles by forward activation, no composition needed.
pub mod documents {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    pub struct ArticleCandidate {
        pub article: NodeId,
        pub label: String,
    }

    impl fmt::Display for ArticleCandidate {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str(&self.label)
        }
    }

    pub struct CandidateEnumerator {
        queue: std::vec::IntoIter<ArticleCandidate>,
    }

    impl CandidateEnumerator {
        pub fn new(scorer: &Scorer<'_>, kb: &KnowledgeBase, config: &RankConfig) -> Self {
            let queue: Vec<_> = scorer
                .candidates(config.candidates, config.exclude_self)
                .into_iter()
                .map(|(article, _)| ArticleCandidate {
                    article,
                    label: kb.label(article).unwrap_or_default().to_string(),
                })
                .collect();
            Self {
                queue: queue.into_iter(),
            }
        }
    }

    impl Generator for CandidateEnumerator {
        type Candidate = ArticleCandidate;

        fn propose(&mut self, _feedback: Option<&Feedback>) -> Option<ArticleCandidate> {
            self.queue.next()
        }
    }

    pub struct SimilarityCritic<'s, 'kb> {
        pub scorer: &'s Scorer<'kb>,
        pub kb: &'kb KnowledgeBase,
    }

    impl Critic<ArticleCandidate> for SimilarityCritic<'_, '_> {
        fn evaluate(&mut self, candidate: &ArticleCandidate) -> Result<f64> {
            Ok(self.scorer.score(candidate.article)?.percent)
        }

        fn observe(&self, label: &str) -> Result<f64> {
            watch_one(label, self.scorer.pass(), self.kb)
        }
    }

    /// Runs the document task end to end.
    pub fn run_query(
        query: &SourceRef,
        kb: &KnowledgeBase,
        config: &RankConfig,
        exit: &ExitCriteria,
        watch: &[String],
    ) -> Result<LoopReport<ArticleCandidate>> {
        let source = crate::activation::Source::resolve(query, kb)?;
        let scorer = Scorer::new(source, kb, kb.attention(), config.combine)?;
        let mut generator = CandidateEnumerator::new(&scorer, kb, config);
        let mut critic = SimilarityCritic { scorer: &scorer, kb };
        run(&mut generator, &mut critic, exit, watch)
    }
}
