//! Episodic consolidation.
//!
//! One chronological pass folds the sensory buffer into a compact stream
//! of event nodes. Each item is compared against the latest node only and
//! either appended (`ADD_NEW`), folded into it (`MERGE`) or dropped
//! (`DISCARD`); the transition for each action is deterministic, so the
//! recorded action log replays to a bit-identical stream.
//!
//! Merge semantics: the node representation is the merged-count-weighted
//! mean of its source visuals (kept in f64 so `representation *
//! merged_count` recovers the exact vector sum), texts concatenate with a
//! newline, and the span extends to cover the item timestamp.

pub mod kmeans;

use std::path::Path;

use crate::error::{Error, Result};
use crate::sensory::SensoryItem;
use crate::util::cosine_f32_f64;

/// Consolidation decision for one sensory item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    AddNew,
    Merge,
    Discard,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::AddNew => "ADD_NEW",
            Action::Merge => "MERGE",
            Action::Discard => "DISCARD",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "ADD_NEW" => Ok(Action::AddNew),
            "MERGE" => Ok(Action::Merge),
            "DISCARD" => Ok(Action::Discard),
            other => Err(Error::Parse(format!("unknown action `{other}`"))),
        }
    }
}

/// A consolidated event node.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicNode {
    /// Count-weighted mean of the source items' visual embeddings.
    pub representation: Vec<f64>,
    /// Newline-joined source text traces.
    pub text: String,
    /// Union of source item timestamps.
    pub span_ms: (u64, u64),
    pub merged_count: usize,
    /// Buffer indices of the items folded into this node.
    pub source_items: Vec<usize>,
    pub is_prototype: bool,
}

impl EpisodicNode {
    fn from_item(item: &SensoryItem, item_index: usize) -> Self {
        Self {
            representation: item.visual.iter().map(|&x| x as f64).collect(),
            text: item.text_trace.clone(),
            span_ms: (item.timestamp_ms, item.timestamp_ms),
            merged_count: 1,
            source_items: vec![item_index],
            is_prototype: false,
        }
    }

    fn merge_item(&mut self, item: &SensoryItem, item_index: usize) {
        let old_count = self.merged_count as f64;
        let new_count = old_count + 1.0;
        for (r, &v) in self.representation.iter_mut().zip(item.visual.iter()) {
            *r = (*r * old_count + v as f64) / new_count;
        }
        self.text.push('\n');
        self.text.push_str(&item.text_trace);
        self.span_ms = (
            self.span_ms.0.min(item.timestamp_ms),
            self.span_ms.1.max(item.timestamp_ms),
        );
        self.merged_count += 1;
        self.source_items.push(item_index);
    }
}

/// The episodic stream plus the action log that produced it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsolidationState {
    pub stream: Vec<EpisodicNode>,
    pub action_log: Vec<Action>,
}

impl ConsolidationState {
    pub fn new() -> Self {
        Self::default()
    }

    /// The latest retained node: merges always target the newest node, so
    /// this is simply the stream tail.
    pub fn latest(&self) -> Option<&EpisodicNode> {
        self.stream.last()
    }
}

/// Thresholds for the rule-based decision operator.
#[derive(Debug, Clone, Copy)]
pub struct RuleThresholds {
    pub theta_merge: f64,
    pub theta_discard: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            theta_merge: 0.85,
            theta_discard: 0.30,
        }
    }
}

/// Rule-based decision operator: no latest node means `ADD_NEW`;
/// cosine >= theta_merge means `MERGE`; cosine <= theta_discard means the
/// item is novel (`ADD_NEW`); anything in between is redundant enough to
/// `DISCARD`.
pub fn decide_rule(
    item: &SensoryItem,
    latest: Option<&EpisodicNode>,
    thresholds: RuleThresholds,
) -> Result<Action> {
    let Some(latest) = latest else {
        return Ok(Action::AddNew);
    };
    if item.visual.len() != latest.representation.len() {
        return Err(Error::Shape(format!(
            "item dimension {} vs stream dimension {}",
            item.visual.len(),
            latest.representation.len()
        )));
    }
    let cos = cosine_f32_f64(&item.visual, &latest.representation);
    if cos >= thresholds.theta_merge {
        Ok(Action::Merge)
    } else if cos <= thresholds.theta_discard {
        Ok(Action::AddNew)
    } else {
        Ok(Action::Discard)
    }
}

/// Apply one action to the state. `item_index` is the item's position in
/// the sensory buffer, recorded as the node's source reference.
pub fn apply_action(
    state: &mut ConsolidationState,
    item: &SensoryItem,
    item_index: usize,
    action: Action,
) -> Result<()> {
    match action {
        Action::AddNew => state.stream.push(EpisodicNode::from_item(item, item_index)),
        Action::Merge => match state.stream.last_mut() {
            Some(node) => node.merge_item(item, item_index),
            None => {
                return Err(Error::Contract(
                    "MERGE with an empty episodic stream".to_string(),
                ))
            }
        },
        Action::Discard => {}
    }
    state.action_log.push(action);
    Ok(())
}

/// Single chronological pass over a timestamp-ordered buffer with any
/// decision policy (the rule operator, a learned policy, or an
/// adapter-backed one).
pub fn consolidate_pass<P>(buffer: &[SensoryItem], mut policy: P) -> Result<ConsolidationState>
where
    P: FnMut(&SensoryItem, Option<&EpisodicNode>) -> Result<Action>,
{
    let mut state = ConsolidationState::new();
    for (index, item) in buffer.iter().enumerate() {
        let action = policy(item, state.latest())
            .map_err(|e| Error::Adapter(format!("policy failed at item {index}: {e}")))?;
        apply_action(&mut state, item, index, action)?;
    }
    Ok(state)
}

/// Rule-policy convenience wrapper over [`consolidate_pass`].
pub fn consolidate_with_rule(
    buffer: &[SensoryItem],
    thresholds: RuleThresholds,
) -> Result<ConsolidationState> {
    consolidate_pass(buffer, |item, latest| decide_rule(item, latest, thresholds))
}

/// Rebuild a stream from a recorded action log. With the same buffer this
/// reproduces the original stream exactly.
pub fn replay_actions(buffer: &[SensoryItem], actions: &[Action]) -> Result<ConsolidationState> {
    if buffer.len() != actions.len() {
        return Err(Error::Contract(format!(
            "action log length {} does not match buffer length {}",
            actions.len(),
            buffer.len()
        )));
    }
    let mut state = ConsolidationState::new();
    for (index, (item, &action)) in buffer.iter().zip(actions.iter()).enumerate() {
        apply_action(&mut state, item, index, action)
            .map_err(|e| Error::Contract(format!("replay failed at item {index}: {e}")))?;
    }
    Ok(state)
}

/// Serialize an action log, one action kind per line.
pub fn action_log_to_string(actions: &[Action]) -> String {
    let mut out = String::new();
    for a in actions {
        out.push_str(a.as_str());
        out.push('\n');
    }
    out
}

pub fn action_log_from_str(text: &str) -> Result<Vec<Action>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(Action::parse)
        .collect()
}

pub fn write_action_log(path: &Path, actions: &[Action]) -> Result<()> {
    std::fs::write(path, action_log_to_string(actions)).map_err(|e| Error::io_at(path, e))
}

pub fn read_action_log(path: &Path) -> Result<Vec<Action>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    action_log_from_str(&text)
}
