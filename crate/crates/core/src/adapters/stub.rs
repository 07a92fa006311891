//! Deterministic adapter stubs.
//!
//! Everything here is pure: the same seed and the same input always
//! produce byte-identical output, which keeps full-pipeline tests and
//! snapshot digests reproducible without any model server.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapters::{
    AdapterInfo, CandidateScorer, Capability, Captioner, Embedder, EntityExtractor, VisualPayload,
};
use crate::error::Result;
use crate::util::{fnv1a_64, l2_normalize, normalize_text};

/// Hash-seeded pseudo-random unit embeddings.
///
/// Text is whitespace/case normalized before hashing, so `"DOOR "` and
/// `"door"` embed identically; visual payloads hash their canonical bytes.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dim: usize,
    seed: u64,
}

impl StubEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    fn vector_for(&self, input_hash: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ input_hash);
        let mut v: Vec<f32> = (0..self.dim)
            .map(|_| {
                // Box-Muller keeps the generator independent of any
                // distribution crate's sampling internals.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
            })
            .collect();
        l2_normalize(&mut v);
        v
    }
}

impl Embedder for StubEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>> {
        Ok(self.vector_for(fnv1a_64(normalize_text(text).as_bytes())))
    }

    fn embed_visual(&self, payload: &VisualPayload) -> Result<Vec<f32>> {
        Ok(self.vector_for(fnv1a_64(&payload.canonical_bytes())))
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::EmbedText, Capability::EmbedVisual],
            dimension: Some(self.dim),
            deterministic: true,
        }
    }
}

/// Captions a window as a stable signature string.
#[derive(Debug, Clone, Default)]
pub struct StubCaptioner;

impl Captioner for StubCaptioner {
    fn caption(
        &self,
        clip_id: u64,
        window: (usize, usize),
        payload: &VisualPayload,
    ) -> Result<String> {
        let sig = fnv1a_64(&payload.canonical_bytes());
        Ok(format!(
            "caption clip={clip_id} frames={}..{} sig={:08x}",
            window.0,
            window.1,
            sig as u32
        ))
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::Caption],
            dimension: None,
            deterministic: true,
        }
    }
}

/// Uppercase-token entity extraction.
///
/// A token whose alphabetic characters are all uppercase (at least two
/// letters) is an entity mention; its surface form is the lowercased
/// token and its gloss is `surface: line` so that co-mentioned entities
/// get distinct glosses. The pattern `ENTITY lowercase-word ENTITY`
/// inside one line yields a relation triple.
#[derive(Debug, Clone, Default)]
pub struct StubExtractor;

fn strip_token(tok: &str) -> &str {
    tok.trim_matches(|c: char| !c.is_alphanumeric())
}

fn is_entity_token(tok: &str) -> bool {
    let letters: Vec<char> = tok.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
}

impl EntityExtractor for StubExtractor {
    fn extract(&self, _node_id: usize, text: &str) -> Result<String> {
        let mut out = String::new();
        for line in text.lines() {
            let gloss = line.trim();
            if gloss.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = gloss.split_whitespace().map(strip_token).collect();
            for tok in &tokens {
                if is_entity_token(tok) {
                    let surface = tok.to_lowercase();
                    out.push_str(&format!("ENTITY\t{surface}\t{surface}: {gloss}\n"));
                }
            }
            for w in tokens.windows(3) {
                if is_entity_token(w[0]) && !w[1].is_empty() && !is_entity_token(w[1]) && is_entity_token(w[2]) {
                    out.push_str(&format!(
                        "REL\t{}\t{}\t{}\n",
                        w[0].to_lowercase(),
                        w[1].to_lowercase(),
                        w[2].to_lowercase()
                    ));
                }
            }
        }
        Ok(out)
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::ExtractEntities],
            dimension: None,
            deterministic: true,
        }
    }
}

/// Scores a candidate by its token overlap with the evidence text.
///
/// `scale` sharpens the downstream softmax: one token of overlap at the
/// default scale is enough to push a 4-way posterior below the default
/// entropy gate.
#[derive(Debug, Clone)]
pub struct StubScorer {
    scale: f64,
}

impl StubScorer {
    pub fn new() -> Self {
        Self { scale: 3.0 }
    }

    pub fn with_scale(scale: f64) -> Self {
        Self { scale }
    }
}

impl Default for StubScorer {
    fn default() -> Self {
        Self::new()
    }
}

fn tokens_of(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

impl CandidateScorer for StubScorer {
    fn score(
        &self,
        _question: &str,
        evidence: &[String],
        candidates: &[String],
    ) -> Result<Vec<f64>> {
        let mut evidence_tokens: Vec<String> = Vec::new();
        for e in evidence {
            evidence_tokens.extend(tokens_of(e));
        }
        Ok(candidates
            .iter()
            .map(|c| {
                let cand = tokens_of(c);
                let mut seen: Vec<&String> = Vec::new();
                let overlap = cand
                    .iter()
                    .filter(|t| {
                        if evidence_tokens.contains(t) && !seen.contains(t) {
                            seen.push(t);
                            true
                        } else {
                            false
                        }
                    })
                    .count();
                self.scale * overlap as f64
            })
            .collect())
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::ScoreCandidates],
            dimension: None,
            deterministic: true,
        }
    }
}

/// Always returns equal scores; the posterior stays uniform and retrieval
/// exhausts every layer. Useful for exercising tie-break and exhaustion
/// paths.
#[derive(Debug, Clone, Default)]
pub struct UniformScorer;

impl CandidateScorer for UniformScorer {
    fn score(
        &self,
        _question: &str,
        _evidence: &[String],
        candidates: &[String],
    ) -> Result<Vec<f64>> {
        Ok(vec![0.0; candidates.len()])
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::ScoreCandidates],
            dimension: None,
            deterministic: true,
        }
    }
}
