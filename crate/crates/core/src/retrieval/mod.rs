//! Entropy-driven top-down retrieval.
//!
//! A question starts at the symbolic layer and drills down through the
//! episodic stream to the sensory buffer only while the answer posterior
//! stays uncertain. After each evidence bundle the posterior is refreshed
//! by softmaxing adapter scores over the full accumulated evidence;
//! retrieval stops when entropy falls to `gamma`, when the entropy drop
//! between consecutive evidence steps plateaus below `epsilon_h` for
//! `patience` steps, or when no layers remain. The first evidence step has
//! no predecessor evidence step, so it never counts toward the plateau.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapters::{CandidateScorer, Embedder};
use crate::error::{Error, Result};
use crate::schema::query_concepts;
use crate::store::MemoryPyramid;
use crate::util::cosine_f32;

/// A multiple-choice question.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub question: String,
    pub candidates: Vec<String>,
}

impl Query {
    pub fn new(question: impl Into<String>, candidates: Vec<String>) -> Result<Self> {
        if candidates.len() < 2 {
            return Err(Error::Contract(
                "a query needs at least two candidates".to_string(),
            ));
        }
        let mut seen = BTreeSet::new();
        for c in &candidates {
            if !seen.insert(c) {
                return Err(Error::Contract(format!("duplicate candidate `{c}`")));
            }
        }
        Ok(Self {
            question: question.into(),
            candidates,
        })
    }
}

/// The three memory layers, in strict retrieval order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Symbolic,
    Episodic,
    Sensory,
}

impl Layer {
    pub const ORDER: [Layer; 3] = [Layer::Symbolic, Layer::Episodic, Layer::Sensory];

    pub fn as_str(&self) -> &'static str {
        match self {
            Layer::Symbolic => "symbolic",
            Layer::Episodic => "episodic",
            Layer::Sensory => "sensory",
        }
    }
}

/// One retrieved record: id, display text, similarity score and temporal
/// hints where the layer has them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub id: String,
    pub text: String,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_ms: Option<(u64, u64)>,
}

/// Everything one retrieval step returned.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceBundle {
    pub layer: Layer,
    pub items: Vec<EvidenceItem>,
    pub step_index: usize,
}

/// Posterior over candidates plus the entropy trajectory and accumulated
/// evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    pub probs: Vec<f64>,
    /// `entropy_history[0]` is the zero-evidence baseline H_0.
    pub entropy_history: Vec<f64>,
    pub evidence: Vec<EvidenceBundle>,
    pub plateau_count: u32,
}

/// Natural-log Shannon entropy of a probability vector. Zero-probability
/// terms contribute zero.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for &p in probs {
        if p < -1e-9 {
            return Err(Error::Domain(format!("negative probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.iter().map(|e| e / total).collect()
}

/// Render accumulated evidence for the scorer: every bundle's item texts,
/// in retrieval order, nothing else. The trace records the same item ids,
/// so the scorer's exact context is auditable.
pub fn render_evidence(bundles: &[EvidenceBundle]) -> Vec<String> {
    bundles
        .iter()
        .flat_map(|b| b.items.iter().map(|i| i.text.clone()))
        .collect()
}

fn score_to_probs(
    query: &Query,
    bundles: &[EvidenceBundle],
    scorer: &dyn CandidateScorer,
) -> Result<Vec<f64>> {
    let scores = scorer
        .score(&query.question, &render_evidence(bundles), &query.candidates)
        .map_err(|e| Error::Adapter(format!("scorer failed: {e}")))?;
    if scores.len() != query.candidates.len() {
        return Err(Error::Contract(format!(
            "scorer returned {} scores for {} candidates",
            scores.len(),
            query.candidates.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Contract("scorer returned a non-finite score".to_string()));
    }
    Ok(softmax(&scores))
}

/// Zero-evidence posterior: one scorer call with the question and
/// candidates only, establishing H_0.
pub fn initialize_posterior(query: &Query, scorer: &dyn CandidateScorer) -> Result<PosteriorState> {
    let probs = score_to_probs(query, &[], scorer)?;
    let h0 = entropy(&probs)?;
    Ok(PosteriorState {
        probs,
        entropy_history: vec![h0],
        evidence: Vec::new(),
        plateau_count: 0,
    })
}

/// Fold one evidence bundle into the posterior.
///
/// The plateau counter increments when the entropy drop between two
/// consecutive *evidence* steps falls below `epsilon_h`; the drop from the
/// zero-evidence baseline H_0 is excluded. It resets on any larger drop.
pub fn update_posterior(
    state: &PosteriorState,
    query: &Query,
    new_evidence: EvidenceBundle,
    scorer: &dyn CandidateScorer,
    epsilon_h: f64,
) -> Result<PosteriorState> {
    let mut evidence = state.evidence.clone();
    evidence.push(new_evidence);
    let probs = score_to_probs(query, &evidence, scorer)?;
    let h = entropy(&probs)?;
    let mut entropy_history = state.entropy_history.clone();
    let prev = *entropy_history.last().expect("entropy history is never empty");
    let evidence_steps_before = entropy_history.len() - 1;
    let plateau_count = if evidence_steps_before == 0 {
        0
    } else if prev - h < epsilon_h {
        state.plateau_count + 1
    } else {
        0
    };
    entropy_history.push(h);
    Ok(PosteriorState {
        probs,
        entropy_history,
        evidence,
        plateau_count,
    })
}

/// Stop/continue decision for the retrieval loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Stop,
    Continue,
}

/// Stop when the latest entropy is at or below `gamma`, or when the
/// entropy reduction between consecutive evidence steps stayed below
/// `epsilon_h` for `patience` steps. Layer exhaustion is the loop's own
/// third stop condition. The plateau count is recomputed from the entropy
/// history so this is a pure function of its arguments.
pub fn should_stop(
    state: &PosteriorState,
    gamma: f64,
    epsilon_h: f64,
    patience: u32,
) -> StopDecision {
    let latest = *state
        .entropy_history
        .last()
        .expect("entropy history is never empty");
    if latest <= gamma {
        return StopDecision::Stop;
    }
    // Consecutive plateau steps, newest backwards, skipping the H_0 delta.
    let h = &state.entropy_history;
    let mut plateau = 0u32;
    for s in (2..h.len()).rev() {
        if h[s - 1] - h[s] < epsilon_h {
            plateau += 1;
        } else {
            break;
        }
    }
    if plateau >= patience {
        return StopDecision::Stop;
    }
    StopDecision::Continue
}

/// Retrieval knobs, defaults straight from the engine configuration.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalParams {
    pub gamma: f64,
    pub epsilon_h: f64,
    pub patience: u32,
    pub top_k_sym: usize,
    pub top_k_epi: usize,
    pub top_k_sen: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            gamma: 0.72,
            epsilon_h: 0.01,
            patience: 2,
            top_k_sym: 5,
            top_k_epi: 2,
            top_k_sen: 1,
        }
    }
}

/// Retrieve one layer's evidence.
///
/// Episodic candidates are restricted to nodes pointed at by concepts
/// already retrieved (when any exist); sensory candidates to source items
/// of episodic nodes already retrieved. Empty restrictions fall back to a
/// global search.
pub fn retrieve_layer(
    layer: Layer,
    query: &Query,
    pyramid: &MemoryPyramid,
    embedder: &dyn Embedder,
    k: usize,
    prior_evidence: &[EvidenceBundle],
    step_index: usize,
) -> Result<EvidenceBundle> {
    let items = match layer {
        Layer::Symbolic => {
            let ranked = query_concepts(&pyramid.schema, &query.question, embedder, k)?;
            ranked
                .into_iter()
                .map(|(id, score)| {
                    let concept = pyramid
                        .schema
                        .concept(&id)
                        .expect("query_concepts returned an unknown concept id");
                    EvidenceItem {
                        id,
                        text: concept.gloss.clone(),
                        score,
                        timestamp_ms: None,
                        span_ms: None,
                    }
                })
                .collect()
        }
        Layer::Episodic => {
            let restricted: BTreeSet<usize> = prior_evidence
                .iter()
                .filter(|b| b.layer == Layer::Symbolic)
                .flat_map(|b| b.items.iter())
                .flat_map(|item| pyramid.schema.pointers(&item.id))
                .filter(|&n| n < pyramid.episodic.stream.len())
                .collect();
            let candidates: Vec<usize> = if restricted.is_empty() {
                (0..pyramid.episodic.stream.len()).collect()
            } else {
                restricted.into_iter().collect()
            };
            let query_emb = embedder.embed_text(&query.question)?;
            let mut scored: Vec<(usize, f64)> = Vec::with_capacity(candidates.len());
            for node_id in candidates {
                let node = &pyramid.episodic.stream[node_id];
                let emb = embedder.embed_text(&node.text)?;
                scored.push((node_id, cosine_f32(&query_emb, &emb)));
            }
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scored.truncate(k);
            scored
                .into_iter()
                .map(|(node_id, score)| {
                    let node = &pyramid.episodic.stream[node_id];
                    EvidenceItem {
                        id: node_id.to_string(),
                        text: node.text.clone(),
                        score,
                        timestamp_ms: None,
                        span_ms: Some(node.span_ms),
                    }
                })
                .collect()
        }
        Layer::Sensory => {
            let restricted: BTreeSet<usize> = prior_evidence
                .iter()
                .filter(|b| b.layer == Layer::Episodic)
                .flat_map(|b| b.items.iter())
                .filter_map(|item| item.id.parse::<usize>().ok())
                .filter(|&n| n < pyramid.episodic.stream.len())
                .flat_map(|n| pyramid.episodic.stream[n].source_items.clone())
                .filter(|&i| i < pyramid.sensory.len())
                .collect();
            let candidates: Vec<usize> = if restricted.is_empty() {
                (0..pyramid.sensory.len()).collect()
            } else {
                restricted.into_iter().collect()
            };
            let query_emb = embedder.embed_text(&query.question)?;
            // Clip-level retrieval: a clip scores as the max cosine over
            // its candidate items.
            let mut clip_best: Vec<(u64, usize, f64)> = Vec::new();
            for item_idx in candidates {
                let item = &pyramid.sensory[item_idx];
                let score = cosine_f32(&query_emb, &item.visual);
                match clip_best.iter_mut().find(|(c, _, _)| *c == item.clip_id) {
                    Some(entry) => {
                        if score > entry.2 {
                            entry.1 = item_idx;
                            entry.2 = score;
                        }
                    }
                    None => clip_best.push((item.clip_id, item_idx, score)),
                }
            }
            clip_best.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            clip_best.truncate(k);
            clip_best
                .into_iter()
                .map(|(clip_id, item_idx, score)| {
                    let item = &pyramid.sensory[item_idx];
                    EvidenceItem {
                        id: clip_id.to_string(),
                        text: item.text_trace.clone(),
                        score,
                        timestamp_ms: Some(item.timestamp_ms),
                        span_ms: None,
                    }
                })
                .collect()
        }
    };
    Ok(EvidenceBundle {
        layer,
        items,
        step_index,
    })
}

/// One line of the exported retrieval trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub layer: String,
    pub item_ids: Vec<String>,
    pub probs: Vec<f64>,
    pub entropy: f64,
    pub decision: String,
}

/// Full record of one question's retrieval.
#[derive(Debug, Clone)]
pub struct RetrievalTrace {
    pub steps: Vec<TraceStep>,
    pub answer_index: usize,
    pub answer: String,
}

impl RetrievalTrace {
    /// Line-delimited JSON: one record per step, then a result record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("trace step serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&serde_json::json!({
                "answer_index": self.answer_index,
                "answer": self.answer,
            }))
            .expect("trace result serializes"),
        );
        out.push('\n');
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io_at(path, e))?;
        Ok(())
    }

    /// Evidence steps only (the init record is step 0).
    pub fn evidence_steps(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

fn argmax_lowest_index(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Answer a multiple-choice question over a built pyramid.
///
/// Layers run strictly symbolic, episodic, sensory, each at most once;
/// after each posterior update the stop rule is consulted. Returns the
/// argmax candidate (lowest index on ties), the final posterior and the
/// full trace.
pub fn answer(
    query: &Query,
    pyramid: &MemoryPyramid,
    embedder: &dyn Embedder,
    scorer: &dyn CandidateScorer,
    params: &RetrievalParams,
) -> Result<(usize, PosteriorState, RetrievalTrace)> {
    let mut state = initialize_posterior(query, scorer)?;
    let mut steps = vec![TraceStep {
        step: 0,
        layer: "init".to_string(),
        item_ids: Vec::new(),
        probs: state.probs.clone(),
        entropy: state.entropy_history[0],
        decision: "continue".to_string(),
    }];

    for (i, &layer) in Layer::ORDER.iter().enumerate() {
        let step_index = i + 1;
        let k = match layer {
            Layer::Symbolic => params.top_k_sym,
            Layer::Episodic => params.top_k_epi,
            Layer::Sensory => params.top_k_sen,
        };
        let bundle = retrieve_layer(
            layer,
            query,
            pyramid,
            embedder,
            k,
            &state.evidence,
            step_index,
        )?;
        let item_ids: Vec<String> = bundle.items.iter().map(|it| it.id.clone()).collect();
        state = update_posterior(&state, query, bundle, scorer, params.epsilon_h)?;
        let exhausted = step_index == Layer::ORDER.len();
        let decision = if should_stop(&state, params.gamma, params.epsilon_h, params.patience)
            == StopDecision::Stop
        {
            StopDecision::Stop
        } else if exhausted {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        steps.push(TraceStep {
            step: step_index,
            layer: layer.as_str().to_string(),
            item_ids,
            probs: state.probs.clone(),
            entropy: *state.entropy_history.last().unwrap(),
            decision: match decision {
                StopDecision::Stop => "stop".to_string(),
                StopDecision::Continue => "continue".to_string(),
            },
        });
        if decision == StopDecision::Stop {
            break;
        }
    }

    let answer_index = argmax_lowest_index(&state.probs);
    let trace = RetrievalTrace {
        steps,
        answer_index,
        answer: query.candidates[answer_index].clone(),
    };
    Ok((answer_index, state, trace))
}
