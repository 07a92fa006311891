//! Symbolic schema: a knowledge graph over the episodic stream.
//!
//! Entities and glosses come from an extractor adapter as line-oriented
//! records (`ENTITY<TAB>surface<TAB>gloss`, `REL<TAB>subj<TAB>label<TAB>obj`).
//! Mentions unify into concept prototypes (equal normalized surface always
//! unifies; otherwise gloss-embedding cosine against `merge_threshold`),
//! every (node, prototype) pair gets one grounding edge, and resolved
//! relation triples become semantic edges. Grounding edges keep the graph
//! a multimodal index: each concept points back into the episodic stream.

use std::collections::HashMap;

use crate::adapters::{Embedder, EntityExtractor};
use crate::error::{Error, Result};
use crate::episodic::EpisodicNode;
use crate::util::{cosine_f32, normalize_text};

/// Normalized surface form: case-folded, trimmed, whitespace-collapsed.
pub fn normalize_surface(s: &str) -> String {
    normalize_text(s)
}

/// One entity mention inside one episodic node.
#[derive(Debug, Clone, PartialEq)]
pub struct Mention {
    pub node_id: usize,
    pub surface: String,
    pub gloss: String,
}

/// A relation triple extracted from a node, surfaces not yet resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMention {
    pub node_id: usize,
    pub subject: String,
    pub label: String,
    pub object: String,
}

/// A unified concept: stable id (first normalized surface), all surface
/// forms, aggregated gloss, and the gloss embedding used for retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptPrototype {
    pub id: String,
    pub surface_forms: Vec<String>,
    pub gloss: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemaEdge {
    /// Directed, labeled relation between two concepts.
    Semantic {
        src: String,
        label: String,
        dst: String,
    },
    /// Pointer from an episodic node to a concept it instantiates.
    Grounding { node: usize, concept: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaGraph {
    pub concepts: Vec<ConceptPrototype>,
    /// Episodic node ids referenced by at least one grounding edge,
    /// in first-reference order.
    pub episodic_refs: Vec<usize>,
    pub edges: Vec<SchemaEdge>,
}

impl SchemaGraph {
    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concept(&self, id: &str) -> Option<&ConceptPrototype> {
        self.concepts.iter().find(|c| c.id == id)
    }

    /// Grounding pointer set for one concept: episodic node ids, in edge
    /// order. Derived from the edge list, so it can never go stale.
    pub fn pointers(&self, concept_id: &str) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|e| match e {
                SchemaEdge::Grounding { node, concept } if concept == concept_id => Some(*node),
                _ => None,
            })
            .collect()
    }

    pub fn grounding_edge_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| matches!(e, SchemaEdge::Grounding { .. }))
            .count()
    }
}

/// Parse the extractor's line-oriented records for one node. Malformed
/// records are parse errors naming the offending line.
pub fn parse_extraction(
    node_id: usize,
    records: &str,
) -> Result<(Vec<Mention>, Vec<RelationMention>)> {
    let mut mentions = Vec::new();
    let mut relations = Vec::new();
    for raw in records.lines() {
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        match fields[0] {
            "ENTITY" if fields.len() == 3 && !fields[1].trim().is_empty() => {
                mentions.push(Mention {
                    node_id,
                    surface: fields[1].to_string(),
                    gloss: fields[2].to_string(),
                });
            }
            "REL" if fields.len() == 4 => {
                relations.push(RelationMention {
                    node_id,
                    subject: fields[1].to_string(),
                    label: fields[2].to_string(),
                    object: fields[3].to_string(),
                });
            }
            _ => {
                return Err(Error::Parse(format!(
                    "node {node_id}: malformed extraction record `{raw}`"
                )))
            }
        }
    }
    Ok((mentions, relations))
}

/// Run the extractor on one node and parse its output.
pub fn extract_entities(
    node_id: usize,
    node: &EpisodicNode,
    extractor: &dyn EntityExtractor,
) -> Result<(Vec<Mention>, Vec<RelationMention>)> {
    let records = extractor
        .extract(node_id, &node.text)
        .map_err(|e| Error::Adapter(format!("extractor failed on node {node_id}: {e}")))?;
    parse_extraction(node_id, &records)
}

struct ProtoDraft {
    id: String,
    surface_forms: Vec<String>,
    glosses: Vec<String>,
    embedding: Vec<f32>,
    dirty: bool,
}

impl ProtoDraft {
    fn gloss_text(&self) -> String {
        self.glosses.join("\n")
    }

    fn refresh(&mut self, embedder: &dyn Embedder) -> Result<()> {
        if self.dirty {
            self.embedding = embedder.embed_text(&self.gloss_text())?;
            self.dirty = false;
        }
        Ok(())
    }

    fn absorb(&mut self, surface_norm: &str, gloss: &str) {
        if !self.surface_forms.iter().any(|s| s == surface_norm) {
            self.surface_forms.push(surface_norm.to_string());
        }
        if !self.glosses.iter().any(|g| g == gloss) {
            self.glosses.push(gloss.to_string());
            self.dirty = true;
        }
    }
}

/// Unify mentions into concept prototypes.
///
/// Returns the prototypes plus, per input mention, the index of its
/// assigned prototype. Mentions are processed in input order; prototype
/// ids are the first normalized surface seen.
pub fn unify_prototypes(
    mentions: &[Mention],
    embedder: &dyn Embedder,
    merge_threshold: f64,
) -> Result<(Vec<ConceptPrototype>, Vec<usize>)> {
    let mut drafts: Vec<ProtoDraft> = Vec::new();
    let mut by_surface: HashMap<String, usize> = HashMap::new();
    let mut assignment = Vec::with_capacity(mentions.len());

    for mention in mentions {
        let surface = normalize_surface(&mention.surface);
        if surface.is_empty() {
            return Err(Error::Parse(format!(
                "node {}: empty surface form",
                mention.node_id
            )));
        }
        let target = if let Some(&idx) = by_surface.get(&surface) {
            idx
        } else {
            // New surface: try an embedding-level unification.
            let gloss_embedding = embedder
                .embed_text(&mention.gloss)
                .map_err(|e| Error::Adapter(format!("gloss embedding failed: {e}")))?;
            let mut best: Option<(usize, f64)> = None;
            for (idx, draft) in drafts.iter_mut().enumerate() {
                draft.refresh(embedder)?;
                let cos = cosine_f32(&gloss_embedding, &draft.embedding);
                if cos >= merge_threshold {
                    let better = match best {
                        None => true,
                        Some((_, b)) => cos > b,
                    };
                    if better {
                        best = Some((idx, cos));
                    }
                }
            }
            match best {
                Some((idx, _)) => idx,
                None => {
                    drafts.push(ProtoDraft {
                        id: surface.clone(),
                        surface_forms: Vec::new(),
                        glosses: Vec::new(),
                        embedding: gloss_embedding,
                        dirty: true,
                    });
                    drafts.len() - 1
                }
            }
        };
        drafts[target].absorb(&surface, &mention.gloss);
        by_surface.insert(surface, target);
        assignment.push(target);
    }

    let mut concepts = Vec::with_capacity(drafts.len());
    for mut draft in drafts {
        draft.refresh(embedder)?;
        let gloss = draft.gloss_text();
        concepts.push(ConceptPrototype {
            id: draft.id,
            surface_forms: draft.surface_forms,
            gloss,
            embedding: draft.embedding,
        });
    }
    Ok((concepts, assignment))
}

/// Build the schema graph over an episodic stream.
///
/// Grounding edges are deduplicated per (node, concept) pair. Relation
/// triples whose endpoints do not resolve to a known surface form are
/// skipped, degrading to a grounding-only graph rather than failing the
/// build.
pub fn build_schema(
    stream: &[EpisodicNode],
    extractor: &dyn EntityExtractor,
    embedder: &dyn Embedder,
    merge_threshold: f64,
) -> Result<SchemaGraph> {
    let mut mentions = Vec::new();
    let mut relations = Vec::new();
    for (node_id, node) in stream.iter().enumerate() {
        let (m, r) = extract_entities(node_id, node, extractor)?;
        mentions.extend(m);
        relations.extend(r);
    }

    let (concepts, assignment) = unify_prototypes(&mentions, embedder, merge_threshold)?;

    let mut edges = Vec::new();
    let mut episodic_refs = Vec::new();
    let mut seen_grounding: Vec<(usize, usize)> = Vec::new();
    for (mention, &proto_idx) in mentions.iter().zip(assignment.iter()) {
        let key = (mention.node_id, proto_idx);
        if seen_grounding.contains(&key) {
            continue;
        }
        seen_grounding.push(key);
        if !episodic_refs.contains(&mention.node_id) {
            episodic_refs.push(mention.node_id);
        }
        edges.push(SchemaEdge::Grounding {
            node: mention.node_id,
            concept: concepts[proto_idx].id.clone(),
        });
    }

    let mut surface_to_concept: HashMap<String, usize> = HashMap::new();
    for (idx, concept) in concepts.iter().enumerate() {
        for surface in &concept.surface_forms {
            surface_to_concept.insert(surface.clone(), idx);
        }
    }
    for rel in &relations {
        let src = surface_to_concept.get(&normalize_surface(&rel.subject));
        let dst = surface_to_concept.get(&normalize_surface(&rel.object));
        if let (Some(&s), Some(&d)) = (src, dst) {
            edges.push(SchemaEdge::Semantic {
                src: concepts[s].id.clone(),
                label: rel.label.clone(),
                dst: concepts[d].id.clone(),
            });
        }
    }

    Ok(SchemaGraph {
        concepts,
        episodic_refs,
        edges,
    })
}

/// Rank concepts against a text query by gloss-embedding cosine.
/// Descending score, ascending concept id on ties, at most `k` results.
pub fn query_concepts(
    graph: &SchemaGraph,
    text: &str,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    debug_assert!(k >= 1);
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let query = embedder.embed_text(text)?;
    let mut scored: Vec<(String, f64)> = graph
        .concepts
        .iter()
        .map(|c| (c.id.clone(), cosine_f32(&query, &c.embedding)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
