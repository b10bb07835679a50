//! Grid-world action learning.
//!
//! Actions are primitives (unit moves) or composites (ordered sequences of
//! earlier actions). Demonstrations are parsed into known actions and stored
//! as new composites; the solver composes known actions to reach a target
//! and registers the composition it found.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::scl::{self, Critic, ExitCriteria, ExitReason, Feedback, Generator, LoopReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub x: i64,
    pub y: i64,
}

impl GridState {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn offset(self, (dx, dy): (i64, i64)) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: GridState) -> i64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

impl fmt::Display for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

impl std::str::FromStr for GridState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (x, y) = s
            .split_once(',')
            .ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<i64>().map_err(|e| format!("{v:?}: {e}"));
        Ok(GridState::new(parse(x)?, parse(y)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionKind {
    Primitive { dx: i64, dy: i64 },
    Composite { children: Vec<ActionId> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub label: String,
    pub kind: ActionKind,
    net: (i64, i64),
    /// Primitive expansion.
    flat: Vec<ActionId>,
}

impl Action {
    pub fn is_primitive(&self) -> bool {
        matches!(self.kind, ActionKind::Primitive { .. })
    }
}

const UNIT_MOVES: [(&str, (i64, i64)); 4] = [("U", (0, 1)), ("D", (0, -1)), ("L", (-1, 0)), ("R", (1, 0))];

fn unit_label(delta: (i64, i64)) -> Option<&'static str> {
    UNIT_MOVES.iter().find(|(_, d)| *d == delta).map(|(l, _)| *l)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionKb {
    actions: Vec<Action>,
    by_label: HashMap<String, ActionId>,
    by_flat: HashMap<Vec<ActionId>, ActionId>,
}

impl ActionKb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_primitives(labels: &[&str]) -> Self {
        let mut kb = Self::new();
        for label in labels {
            let (_, delta) = UNIT_MOVES
                .iter()
                .find(|(l, _)| l == label)
                .unwrap_or_else(|| panic!("{label} is not a unit move"));
            kb.add_primitive(label, *delta).expect("fresh primitive");
        }
        kb
    }

    /// U, D, L and R.
    pub fn standard() -> Self {
        Self::with_primitives(&["U", "D", "L", "R"])
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, id: ActionId) -> Result<&Action> {
        self.actions
            .get(id.0)
            .ok_or_else(|| Error::UnknownAction(format!("#{}", id.0)))
    }

    pub fn by_label(&self, label: &str) -> Option<ActionId> {
        self.by_label.get(label).copied()
    }

    pub fn label(&self, id: ActionId) -> &str {
        &self.actions[id.0].label
    }

    pub fn actions(&self) -> impl Iterator<Item = (ActionId, &Action)> {
        self.actions.iter().enumerate().map(|(i, a)| (ActionId(i), a))
    }

    pub fn primitive_for(&self, delta: (i64, i64)) -> Option<ActionId> {
        self.actions()
            .find(|(_, a)| matches!(a.kind, ActionKind::Primitive { dx, dy } if (dx, dy) == delta))
            .map(|(id, _)| id)
    }

    pub fn add_primitive(&mut self, label: &str, delta: (i64, i64)) -> Result<ActionId> {
        if self.by_label.contains_key(label) {
            return Err(Error::InvalidParameters(format!("duplicate action label {label:?}")));
        }
        if self.primitive_for(delta).is_some() {
            return Err(Error::InvalidParameters(format!(
                "a primitive with effect {delta:?} already exists"
            )));
        }
        let id = ActionId(self.actions.len());
        self.actions.push(Action {
            label: label.to_string(),
            kind: ActionKind::Primitive { dx: delta.0, dy: delta.1 },
            net: delta,
            flat: vec![id],
        });
        self.by_label.insert(label.to_string(), id);
        Ok(id)
    }

    /// Adds a composite unless one with the same primitive expansion exists.
    /// Returns the id and whether a node was created.
    pub fn add_composite(&mut self, children: &[ActionId]) -> Result<(ActionId, bool)> {
        let label = self.next_composite_label();
        self.add_composite_labeled(&label, children)
    }

    fn add_composite_labeled(&mut self, label: &str, children: &[ActionId]) -> Result<(ActionId, bool)> {
        if children.is_empty() {
            return Err(Error::InvalidParameters("composite needs children".into()));
        }
        let mut flat = Vec::new();
        let mut net = (0, 0);
        for &c in children {
            let child = self.get(c)?;
            flat.extend_from_slice(&child.flat);
            net = (net.0 + child.net.0, net.1 + child.net.1);
        }
        if let Some(&existing) = self.by_flat.get(&flat) {
            return Ok((existing, false));
        }
        if self.by_label.contains_key(label) {
            return Err(Error::InvalidParameters(format!("duplicate action label {label:?}")));
        }
        let id = ActionId(self.actions.len());
        self.actions.push(Action {
            label: label.to_string(),
            kind: ActionKind::Composite {
                children: children.to_vec(),
            },
            net,
            flat: flat.clone(),
        });
        self.by_label.insert(label.to_string(), id);
        self.by_flat.insert(flat, id);
        Ok((id, true))
    }

    fn next_composite_label(&self) -> String {
        let mut n = self.actions.iter().filter(|a| !a.is_primitive()).count() + 1;
        loop {
            let label = format!("S{n}");
            if !self.by_label.contains_key(&label) {
                return label;
            }
            n += 1;
        }
    }

    /// Net displacement of an action.
    pub fn net_effect(&self, id: ActionId) -> Result<(i64, i64)> {
        Ok(self.get(id)?.net)
    }

    /// Primitive expansion of an action.
    pub fn flatten(&self, id: ActionId) -> Result<&[ActionId]> {
        Ok(&self.get(id)?.flat)
    }

    pub fn execute(&self, sequence: &[ActionId], start: GridState) -> Result<GridState> {
        sequence
            .iter()
            .try_fold(start, |s, &a| Ok(s.offset(self.net_effect(a)?)))
    }

    pub fn format_sequence(&self, sequence: &[ActionId]) -> String {
        sequence
            .iter()
            .map(|&a| self.label(a))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Line-delimited JSON: primitives, then composites in creation order.
    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        let io = |e| Error::io("<actions>", e);
        let json = |s: &str| serde_json::to_string(s).expect("string");
        for a in self.actions.iter().filter(|a| a.is_primitive()) {
            writeln!(
                out,
                "{{\"t\":\"prim\",\"label\":{},\"dx\":{},\"dy\":{}}}",
                json(&a.label),
                a.net.0,
                a.net.1
            )
            .map_err(io)?;
        }
        for a in &self.actions {
            if let ActionKind::Composite { children } = &a.kind {
                let children: Vec<String> = children.iter().map(|&c| json(self.label(c))).collect();
                writeln!(
                    out,
                    "{{\"t\":\"comp\",\"id\":{},\"children\":[{}]}}",
                    json(&a.label),
                    children.join(",")
                )
                .map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut kb = ActionKb::new();
        for (i, line) in reader.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| Error::io("<actions>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line).map_err(|e| Error::malformed(n, e.to_string()))?;
            let bad = |m: &str| Error::malformed(n, m.to_string());
            match v.get("t").and_then(Value::as_str) {
                Some("prim") => {
                    let label = v.get("label").and_then(Value::as_str).ok_or_else(|| bad("missing label"))?;
                    let dx = v.get("dx").and_then(Value::as_i64).ok_or_else(|| bad("missing dx"))?;
                    let dy = v.get("dy").and_then(Value::as_i64).ok_or_else(|| bad("missing dy"))?;
                    kb.add_primitive(label, (dx, dy))
                        .map_err(|e| Error::malformed(n, e.to_string()))?;
                }
                Some("comp") => {
                    let label = v.get("id").and_then(Value::as_str).ok_or_else(|| bad("missing id"))?;
                    let children = v
                        .get("children")
                        .and_then(Value::as_array)
                        .ok_or_else(|| bad("missing children"))?
                        .iter()
                        .map(|c| {
                            c.as_str()
                                .and_then(|l| kb.by_label(l))
                                .ok_or_else(|| bad(&format!("unknown child {c}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let (_, created) = kb
                        .add_composite_labeled(label, &children)
                        .map_err(|e| Error::malformed(n, e.to_string()))?;
                    if !created {
                        return Err(bad("duplicate composite"));
                    }
                }
                _ => return Err(bad("unknown record type")),
            }
        }
        Ok(kb)
    }
}

/// A sequence of visited states, at least two long.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub states: Vec<GridState>,
}

impl Demonstration {
    pub fn new(states: Vec<GridState>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::ShortDemonstration);
        }
        Ok(Self { states })
    }

    /// One `X,Y` state per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut states = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            states.push(line.parse().map_err(|e: String| Error::malformed(i + 1, e))?);
        }
        Self::new(states)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Learned {
    pub new_primitives: Vec<ActionId>,
    /// The action covering the whole demonstration.
    pub action: ActionId,
    pub created: bool,
    /// The recognized parse of the demonstration.
    pub parse: Vec<ActionId>,
}

/// Recognizes a demonstration in terms of known actions and stores it.
///
/// Unknown unit deltas become new primitives. Non-unit deltas must equal the
/// net effect of a known action (earliest created wins). The primitive
/// expansion is then parsed greedily, preferring the longest matching
/// composite and, among equals, the earliest created.
pub fn learn_demonstration(demo: &Demonstration, kb: &mut ActionKb) -> Result<Learned> {
    let deltas: Vec<(i64, i64)> = demo
        .states
        .windows(2)
        .map(|w| (w[1].x - w[0].x, w[1].y - w[0].y))
        .collect();

    // Validate before mutating so a bad demonstration leaves the KB untouched.
    let mut pending: Vec<(i64, i64)> = Vec::new();
    for (step, &delta) in deltas.iter().enumerate() {
        let known = kb.primitive_for(delta).is_some() || kb.actions().any(|(_, a)| a.net == delta);
        if !known && unit_label(delta).is_none() {
            return Err(Error::InvalidDemonstration {
                step: step + 1,
                dx: delta.0,
                dy: delta.1,
            });
        }
        if !known && !pending.contains(&delta) {
            pending.push(delta);
        }
    }
    let mut new_primitives = Vec::new();
    for delta in pending {
        let label = unit_label(delta).expect("validated");
        new_primitives.push(kb.add_primitive(label, delta)?);
    }

    let mut flat = Vec::new();
    for &delta in &deltas {
        let action = kb
            .primitive_for(delta)
            .or_else(|| kb.actions().find(|(_, a)| a.net == delta).map(|(id, _)| id))
            .expect("validated");
        flat.extend_from_slice(kb.flatten(action)?);
    }
    let parse = greedy_parse(&flat, kb);

    let (action, created) = if parse.len() == 1 {
        (parse[0], false)
    } else {
        kb.add_composite(&parse)?
    };
    Ok(Learned {
        new_primitives,
        action,
        created,
        parse,
    })
}

fn greedy_parse(flat: &[ActionId], kb: &ActionKb) -> Vec<ActionId> {
    let mut composites: Vec<(ActionId, &[ActionId])> = kb
        .actions()
        .filter(|(_, a)| !a.is_primitive())
        .map(|(id, a)| (id, a.flat.as_slice()))
        .collect();
    // Longest first, then earliest created.
    composites.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let mut out = Vec::new();
    let mut i = 0;
    while i < flat.len() {
        match composites.iter().find(|(_, f)| flat[i..].starts_with(f)) {
            Some(&(id, f)) => {
                out.push(id);
                i += f.len();
            }
            None => {
                out.push(flat[i]);
                i += 1;
            }
        }
    }
    out
}

/// Critic score: 100 at the target, decreasing linearly with Manhattan
/// distance, scaled by the starting distance.
pub fn distance_score(endpoint: GridState, target: GridState, start_distance: i64) -> f64 {
    100.0 * (1.0 - endpoint.manhattan(target) as f64 / (start_distance + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceCandidate {
    pub actions: Vec<ActionId>,
    pub labels: Vec<String>,
    pub endpoint: GridState,
}

impl fmt::Display for SequenceCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.labels.is_empty() {
            f.write_str("(empty)")?;
        } else {
            f.write_str(&self.labels.join(" "))?;
        }
        write!(f, " -> {}", self.endpoint)
    }
}

struct FrontierEntry {
    priority: f64,
    order: u64,
    actions: Vec<ActionId>,
    endpoint: GridState,
}

impl PartialEq for FrontierEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for FrontierEntry {}
impl PartialOrd for FrontierEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for FrontierEntry {
    // Max-heap: higher priority first, then earlier insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Best-first enumeration of action sequences. A sequence's extensions are
/// queued with the critic score it received, so the most promising
/// sequences are extended first. Endpoints already reached are skipped.
pub struct SequenceGenerator<'a> {
    kb: &'a ActionKb,
    frontier: BinaryHeap<FrontierEntry>,
    visited: HashSet<GridState>,
    last: Option<(Vec<ActionId>, GridState)>,
    order: u64,
}

impl<'a> SequenceGenerator<'a> {
    pub fn new(kb: &'a ActionKb, start: GridState) -> Self {
        let mut frontier = BinaryHeap::new();
        frontier.push(FrontierEntry {
            priority: f64::INFINITY,
            order: 0,
            actions: Vec::new(),
            endpoint: start,
        });
        Self {
            kb,
            frontier,
            visited: HashSet::from([start]),
            last: None,
            order: 1,
        }
    }
}

impl Generator for SequenceGenerator<'_> {
    type Candidate = SequenceCandidate;

    fn propose(&mut self, feedback: Option<&Feedback>) -> Option<SequenceCandidate> {
        if let (Some((actions, endpoint)), Some(fb)) = (self.last.take(), feedback) {
            for (id, action) in self.kb.actions() {
                let next = endpoint.offset(action.net);
                if self.visited.insert(next) {
                    let mut seq = actions.clone();
                    seq.push(id);
                    self.frontier.push(FrontierEntry {
                        priority: fb.score,
                        order: self.order,
                        actions: seq,
                        endpoint: next,
                    });
                    self.order += 1;
                }
            }
        }
        let entry = self.frontier.pop()?;
        self.last = Some((entry.actions.clone(), entry.endpoint));
        Some(SequenceCandidate {
            labels: entry.actions.iter().map(|&a| self.kb.label(a).to_string()).collect(),
            actions: entry.actions,
            endpoint: entry.endpoint,
        })
    }
}

pub struct DistanceCritic {
    pub target: GridState,
    pub start_distance: i64,
}

impl Critic<SequenceCandidate> for DistanceCritic {
    fn evaluate(&mut self, candidate: &SequenceCandidate) -> Result<f64> {
        Ok(distance_score(candidate.endpoint, self.target, self.start_distance))
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub sequence: Vec<ActionId>,
    pub endpoint: GridState,
    /// Node standing for the whole solution: a registered composite, or the
    /// single action used. `None` for the empty sequence or on failure.
    pub node: Option<ActionId>,
    pub created: bool,
    pub report: LoopReport<SequenceCandidate>,
}

impl Solution {
    pub fn exit(&self) -> ExitReason {
        self.report.exit
    }

    pub fn reached(&self) -> bool {
        self.report.exit == ExitReason::Threshold
    }
}

pub fn solve(kb: &mut ActionKb, start: GridState, target: GridState, exit: &ExitCriteria) -> Result<Solution> {
    if kb.is_empty() {
        return Err(Error::NoActions);
    }
    let exit = ExitCriteria {
        score_threshold: Some(exit.score_threshold.unwrap_or(100.0)),
        ..*exit
    };
    let report = {
        let mut generator = SequenceGenerator::new(kb, start);
        let mut critic = DistanceCritic {
            target,
            start_distance: start.manhattan(target),
        };
        scl::run(&mut generator, &mut critic, &exit, &[])?
    };
    let sequence = report.best.actions.clone();
    let endpoint = report.best.endpoint;
    let (node, created) = if report.exit != ExitReason::Threshold || endpoint != target {
        (None, false)
    } else {
        match sequence.len() {
            0 => (None, false),
            1 => (Some(sequence[0]), false),
            _ => {
                let (id, created) = kb.add_composite(&sequence)?;
                (Some(id), created)
            }
        }
    };
    Ok(Solution {
        sequence,
        endpoint,
        node,
        created,
        report,
    })
}
