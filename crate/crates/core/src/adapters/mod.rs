//! Adapter contracts for every model-dependent step.
//!
//! The engine never calls a model directly: embedding, captioning, entity
//! extraction, candidate scoring and trace judging all go through these
//! traits. [`stub`] ships deterministic test doubles so the whole pipeline
//! runs hermetically; [`remote`] backs the same traits with a
//! chat-completions-style inference server.

pub mod remote;
pub mod stub;

use crate::error::Result;

/// What a model adapter can do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    EmbedText,
    EmbedVisual,
    Caption,
    ExtractEntities,
    ScoreCandidates,
    Judge,
}

/// Self-description an adapter reports: capability set, embedding
/// dimension (for embedders) and whether outputs are deterministic.
#[derive(Debug, Clone)]
pub struct AdapterInfo {
    pub capabilities: Vec<Capability>,
    pub dimension: Option<usize>,
    pub deterministic: bool,
}

/// Raw visual input handed to embedders and captioners: either a window of
/// decoded pixel frames or a window of precomputed per-frame features.
#[derive(Debug, Clone, PartialEq)]
pub enum VisualPayload {
    Pixels {
        height: usize,
        width: usize,
        channels: usize,
        /// Concatenated row-major frame bytes for the whole window.
        data: Vec<u8>,
    },
    Features {
        vectors: Vec<Vec<f32>>,
    },
}

impl VisualPayload {
    /// Canonical byte encoding, used by hashing stubs. Tag byte, then
    /// little-endian dimensions, then raw payload.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        match self {
            VisualPayload::Pixels {
                height,
                width,
                channels,
                data,
            } => {
                let mut out = Vec::with_capacity(1 + 24 + data.len());
                out.push(0u8);
                out.extend_from_slice(&(*height as u64).to_le_bytes());
                out.extend_from_slice(&(*width as u64).to_le_bytes());
                out.extend_from_slice(&(*channels as u64).to_le_bytes());
                out.extend_from_slice(data);
                out
            }
            VisualPayload::Features { vectors } => {
                let mut out = vec![1u8];
                out.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
                for v in vectors {
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                out
            }
        }
    }
}

/// Text and visual embedding with a fixed output dimension.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Vec<f32>>;
    fn embed_visual(&self, payload: &VisualPayload) -> Result<Vec<f32>>;
    fn info(&self) -> AdapterInfo;
}

/// Produces a short text trace for a key sub-clip.
pub trait Captioner: Send + Sync {
    fn caption(&self, clip_id: u64, window: (usize, usize), payload: &VisualPayload)
        -> Result<String>;
    fn info(&self) -> AdapterInfo;
}

/// Extracts entities and relations from an episodic node's text.
///
/// Output is line-oriented: `ENTITY<TAB>surface<TAB>gloss` and
/// `REL<TAB>subject<TAB>label<TAB>object`. The schema builder parses and
/// validates these records.
pub trait EntityExtractor: Send + Sync {
    fn extract(&self, node_id: usize, text: &str) -> Result<String>;
    fn info(&self) -> AdapterInfo;
}

/// Scores answer candidates given a question and accumulated evidence.
/// Returns one finite score per candidate; the retrieval controller
/// softmaxes them into a posterior.
pub trait CandidateScorer: Send + Sync {
    fn score(&self, question: &str, evidence: &[String], candidates: &[String])
        -> Result<Vec<f64>>;
    fn info(&self) -> AdapterInfo;
}

/// Judges the task reward of a generated trace for a given state.
pub trait TraceJudge: Send + Sync {
    fn judge(&self, state: &str, trace: &str) -> Result<f64>;
    fn info(&self) -> AdapterInfo;
}
