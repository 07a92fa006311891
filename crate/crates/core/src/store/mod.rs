//! Immutable on-disk memory snapshots.
//!
//! Layout inside a snapshot directory:
//! `manifest` (key=value lines), `sensory.emb`/`episodic.emb`/`concept.emb`
//! (embedding blobs), `sensory.rec`/`episodic.rec`/`schema.rec` (JSON
//! lines), `actions.log` (one action per line). Every file is written
//! temp-then-rename and digested with 64-bit FNV-1a; the manifest pins the
//! digests, so corruption is caught on load. Saving the same pyramid twice
//! yields byte-identical files.
//!
//! Embeddings persist as f32 per the blob format; episodic node
//! representations are computed in f64, so they round to f32 on save.

pub mod blob;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::episodic::{Action, ConsolidationState, EpisodicNode};
use crate::error::{Error, Result};
use crate::schema::{ConceptPrototype, SchemaEdge, SchemaGraph};
use crate::sensory::SensoryItem;
use crate::util::fnv1a_64;

pub const FORMAT_VERSION: u32 = 1;

pub const FILE_SENSORY_EMB: &str = "sensory.emb";
pub const FILE_EPISODIC_EMB: &str = "episodic.emb";
pub const FILE_CONCEPT_EMB: &str = "concept.emb";
pub const FILE_SENSORY_REC: &str = "sensory.rec";
pub const FILE_EPISODIC_REC: &str = "episodic.rec";
pub const FILE_SCHEMA_REC: &str = "schema.rec";
pub const FILE_ACTIONS: &str = "actions.log";
pub const FILE_MANIFEST: &str = "manifest";

const DATA_FILES: [&str; 7] = [
    FILE_SENSORY_EMB,
    FILE_EPISODIC_EMB,
    FILE_CONCEPT_EMB,
    FILE_SENSORY_REC,
    FILE_EPISODIC_REC,
    FILE_SCHEMA_REC,
    FILE_ACTIONS,
];

/// A fully built three-layer memory. Treated as immutable once built:
/// retrieval takes shared references and never mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryPyramid {
    pub dim: usize,
    pub seed: u64,
    pub sensory: Vec<SensoryItem>,
    pub episodic: ConsolidationState,
    pub schema: SchemaGraph,
    /// Configuration echo captured at build time: provenance, not
    /// validated on load.
    pub build_config: Vec<(String, String)>,
}

impl MemoryPyramid {
    pub fn empty(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            sensory: Vec::new(),
            episodic: ConsolidationState::new(),
            schema: SchemaGraph::default(),
            build_config: Vec::new(),
        }
    }
}

/// Snapshot metadata: layer counts, build provenance and per-file digests.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub format_version: u32,
    pub dim: usize,
    pub seed: u64,
    pub sensory_count: usize,
    pub episodic_count: usize,
    pub concept_count: usize,
    pub edge_count: usize,
    pub action_count: usize,
    pub config: Vec<(String, String)>,
    pub digests: BTreeMap<String, u64>,
}

impl Manifest {
    fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("format_version={}\n", self.format_version));
        out.push_str(&format!("dim={}\n", self.dim));
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("sensory_count={}\n", self.sensory_count));
        out.push_str(&format!("episodic_count={}\n", self.episodic_count));
        out.push_str(&format!("concept_count={}\n", self.concept_count));
        out.push_str(&format!("edge_count={}\n", self.edge_count));
        out.push_str(&format!("action_count={}\n", self.action_count));
        for (k, v) in &self.config {
            out.push_str(&format!("config.{k}={v}\n"));
        }
        for (file, digest) in &self.digests {
            out.push_str(&format!("digest.{file}={digest:016x}\n"));
        }
        out
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        let mut config = Vec::new();
        let mut digests = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| {
                Error::Corruption(format!("manifest line {}: not key=value", lineno + 1))
            })?;
            if let Some(name) = key.strip_prefix("config.") {
                config.push((name.to_string(), val.to_string()));
            } else if let Some(file) = key.strip_prefix("digest.") {
                let digest = u64::from_str_radix(val, 16).map_err(|e| {
                    Error::Corruption(format!("manifest digest for {file}: {e}"))
                })?;
                digests.insert(file.to_string(), digest);
            } else {
                fields.insert(key.to_string(), val.to_string());
            }
        }
        let get = |name: &str| -> Result<String> {
            fields
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Corruption(format!("manifest missing `{name}`")))
        };
        let parse_usize = |name: &str| -> Result<usize> {
            get(name)?
                .parse::<usize>()
                .map_err(|e| Error::Corruption(format!("manifest `{name}`: {e}")))
        };
        let format_version = get("format_version")?
            .parse::<u32>()
            .map_err(|e| Error::Corruption(format!("manifest `format_version`: {e}")))?;
        if format_version != FORMAT_VERSION {
            return Err(Error::Corruption(format!(
                "unsupported snapshot format version {format_version}"
            )));
        }
        Ok(Self {
            format_version,
            dim: parse_usize("dim")?,
            seed: get("seed")?
                .parse::<u64>()
                .map_err(|e| Error::Corruption(format!("manifest `seed`: {e}")))?,
            sensory_count: parse_usize("sensory_count")?,
            episodic_count: parse_usize("episodic_count")?,
            concept_count: parse_usize("concept_count")?,
            edge_count: parse_usize("edge_count")?,
            action_count: parse_usize("action_count")?,
            config,
            digests,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SensoryRecord {
    clip_id: u64,
    timestamp_ms: u64,
    window: (usize, usize),
    text: String,
}

#[derive(Serialize, Deserialize)]
struct EpisodicRecord {
    span_ms: (u64, u64),
    merged_count: usize,
    is_prototype: bool,
    source_items: Vec<usize>,
    text: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SchemaRecord {
    Concept {
        id: String,
        surfaces: Vec<String>,
        gloss: String,
    },
    EpisodicRef {
        id: usize,
    },
    Edge {
        edge_kind: String,
        src: String,
        dst: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

fn jsonl<T: Serialize>(records: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!("{name}.tmp"));
    let final_path = dir.join(name);
    let write = || -> std::io::Result<()> {
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &final_path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io_at(&final_path, e)
    })
}

fn schema_records(schema: &SchemaGraph) -> Vec<SchemaRecord> {
    let mut records = Vec::new();
    for c in &schema.concepts {
        records.push(SchemaRecord::Concept {
            id: c.id.clone(),
            surfaces: c.surface_forms.clone(),
            gloss: c.gloss.clone(),
        });
    }
    for &id in &schema.episodic_refs {
        records.push(SchemaRecord::EpisodicRef { id });
    }
    for edge in &schema.edges {
        records.push(match edge {
            SchemaEdge::Semantic { src, label, dst } => SchemaRecord::Edge {
                edge_kind: "semantic".to_string(),
                src: src.clone(),
                dst: dst.clone(),
                label: Some(label.clone()),
            },
            SchemaEdge::Grounding { node, concept } => SchemaRecord::Edge {
                edge_kind: "grounding".to_string(),
                src: node.to_string(),
                dst: concept.clone(),
                label: None,
            },
        });
    }
    records
}

/// Serialize a pyramid into `dir` and return the manifest. Rewriting the
/// same pyramid produces byte-identical files and digests.
pub fn save_memory(pyramid: &MemoryPyramid, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;

    let sensory_emb = blob::encode_blob(
        pyramid.dim,
        &pyramid
            .sensory
            .iter()
            .map(|i| i.visual.clone())
            .collect::<Vec<_>>(),
    )?;
    let episodic_emb = blob::encode_blob(
        pyramid.dim,
        &pyramid
            .episodic
            .stream
            .iter()
            .map(|n| n.representation.iter().map(|&x| x as f32).collect())
            .collect::<Vec<_>>(),
    )?;
    let concept_emb = blob::encode_blob(
        pyramid.dim,
        &pyramid
            .schema
            .concepts
            .iter()
            .map(|c| c.embedding.clone())
            .collect::<Vec<_>>(),
    )?;

    let sensory_rec = jsonl(pyramid.sensory.iter().map(|i| SensoryRecord {
        clip_id: i.clip_id,
        timestamp_ms: i.timestamp_ms,
        window: i.window,
        text: i.text_trace.clone(),
    }));
    let episodic_rec = jsonl(pyramid.episodic.stream.iter().map(|n| EpisodicRecord {
        span_ms: n.span_ms,
        merged_count: n.merged_count,
        is_prototype: n.is_prototype,
        source_items: n.source_items.clone(),
        text: n.text.clone(),
    }));
    let schema_rec = jsonl(schema_records(&pyramid.schema).into_iter());
    let actions = crate::episodic::action_log_to_string(&pyramid.episodic.action_log);

    let files: [(&str, &[u8]); 7] = [
        (FILE_SENSORY_EMB, &sensory_emb),
        (FILE_EPISODIC_EMB, &episodic_emb),
        (FILE_CONCEPT_EMB, &concept_emb),
        (FILE_SENSORY_REC, sensory_rec.as_bytes()),
        (FILE_EPISODIC_REC, episodic_rec.as_bytes()),
        (FILE_SCHEMA_REC, schema_rec.as_bytes()),
        (FILE_ACTIONS, actions.as_bytes()),
    ];
    let mut digests = BTreeMap::new();
    for (name, bytes) in files {
        write_atomic(dir, name, bytes)?;
        digests.insert(name.to_string(), fnv1a_64(bytes));
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dim: pyramid.dim,
        seed: pyramid.seed,
        sensory_count: pyramid.sensory.len(),
        episodic_count: pyramid.episodic.stream.len(),
        concept_count: pyramid.schema.concepts.len(),
        edge_count: pyramid.schema.edges.len(),
        action_count: pyramid.episodic.action_log.len(),
        config: pyramid.build_config.clone(),
        digests,
    };
    write_atomic(dir, FILE_MANIFEST, manifest.to_text().as_bytes())?;
    Ok(manifest)
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    std::fs::read(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Corruption(format!("{name}: missing from snapshot"))
        } else {
            Error::io_at(&path, e)
        }
    })
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(bytes: &[u8], name: &str) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Corruption(format!("{name}: not UTF-8: {e}")))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| {
            Error::Corruption(format!("{name} line {}: {e}", lineno + 1))
        })?);
    }
    Ok(records)
}

/// Load and verify a snapshot. Every file's digest is checked against the
/// manifest before parsing; dimension and count disagreements between
/// files are consistency errors.
pub fn load_memory(dir: &Path) -> Result<MemoryPyramid> {
    let manifest_bytes = read_file(dir, FILE_MANIFEST)
        .map_err(|_| Error::Corruption(format!("{}: no manifest found", dir.display())))?;
    let manifest_text = std::str::from_utf8(&manifest_bytes)
        .map_err(|e| Error::Corruption(format!("manifest: not UTF-8: {e}")))?;
    let manifest = Manifest::from_text(manifest_text)?;

    let mut contents: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for name in DATA_FILES {
        let bytes = read_file(dir, name)?;
        let expected = manifest
            .digests
            .get(name)
            .copied()
            .ok_or_else(|| Error::Corruption(format!("manifest lacks a digest for {name}")))?;
        let actual = fnv1a_64(&bytes);
        if actual != expected {
            return Err(Error::Corruption(format!(
                "{name}: digest {actual:016x} does not match manifest {expected:016x}"
            )));
        }
        contents.insert(name, bytes);
    }

    let (sens_dim, sens_rows) = blob::decode_blob(&contents[FILE_SENSORY_EMB], FILE_SENSORY_EMB)?;
    let (epi_dim, epi_rows) = blob::decode_blob(&contents[FILE_EPISODIC_EMB], FILE_EPISODIC_EMB)?;
    let (con_dim, con_rows) = blob::decode_blob(&contents[FILE_CONCEPT_EMB], FILE_CONCEPT_EMB)?;
    for (name, dim) in [
        (FILE_SENSORY_EMB, sens_dim),
        (FILE_EPISODIC_EMB, epi_dim),
        (FILE_CONCEPT_EMB, con_dim),
    ] {
        if dim != manifest.dim {
            return Err(Error::Consistency(format!(
                "{name} has dimension {dim}, manifest says {}",
                manifest.dim
            )));
        }
    }

    let sensory_records: Vec<SensoryRecord> =
        parse_jsonl(&contents[FILE_SENSORY_REC], FILE_SENSORY_REC)?;
    let episodic_records: Vec<EpisodicRecord> =
        parse_jsonl(&contents[FILE_EPISODIC_REC], FILE_EPISODIC_REC)?;
    let schema_records: Vec<SchemaRecord> =
        parse_jsonl(&contents[FILE_SCHEMA_REC], FILE_SCHEMA_REC)?;
    let actions_text = std::str::from_utf8(&contents[FILE_ACTIONS])
        .map_err(|e| Error::Corruption(format!("{FILE_ACTIONS}: not UTF-8: {e}")))?;
    let action_log: Vec<Action> = crate::episodic::action_log_from_str(actions_text)
        .map_err(|e| Error::Corruption(format!("{FILE_ACTIONS}: {e}")))?;

    if sensory_records.len() != manifest.sensory_count
        || sens_rows.len() != manifest.sensory_count
    {
        return Err(Error::Consistency(format!(
            "sensory count mismatch: manifest {}, records {}, blob {}",
            manifest.sensory_count,
            sensory_records.len(),
            sens_rows.len()
        )));
    }
    if episodic_records.len() != manifest.episodic_count
        || epi_rows.len() != manifest.episodic_count
    {
        return Err(Error::Consistency("episodic count mismatch".to_string()));
    }
    if action_log.len() != manifest.action_count {
        return Err(Error::Consistency("action count mismatch".to_string()));
    }

    let sensory: Vec<SensoryItem> = sensory_records
        .into_iter()
        .zip(sens_rows)
        .map(|(r, visual)| SensoryItem {
            visual,
            text_trace: r.text,
            timestamp_ms: r.timestamp_ms,
            window: r.window,
            clip_id: r.clip_id,
        })
        .collect();

    let stream: Vec<EpisodicNode> = episodic_records
        .into_iter()
        .zip(epi_rows)
        .enumerate()
        .map(|(idx, (r, rep))| {
            for &src in &r.source_items {
                if src >= sensory.len() {
                    return Err(Error::Consistency(format!(
                        "episodic node {idx} references sensory item {src} of {}",
                        sensory.len()
                    )));
                }
            }
            Ok(EpisodicNode {
                representation: rep.into_iter().map(|x| x as f64).collect(),
                text: r.text,
                span_ms: r.span_ms,
                merged_count: r.merged_count,
                source_items: r.source_items,
                is_prototype: r.is_prototype,
            })
        })
        .collect::<Result<_>>()?;

    let mut concepts: Vec<ConceptPrototype> = Vec::new();
    let mut episodic_refs: Vec<usize> = Vec::new();
    let mut edges: Vec<SchemaEdge> = Vec::new();
    for record in schema_records {
        match record {
            SchemaRecord::Concept { id, surfaces, gloss } => {
                let embedding = con_rows.get(concepts.len()).cloned().ok_or_else(|| {
                    Error::Consistency(format!(
                        "concept `{id}` has no embedding row in {FILE_CONCEPT_EMB}"
                    ))
                })?;
                concepts.push(ConceptPrototype {
                    id,
                    surface_forms: surfaces,
                    gloss,
                    embedding,
                });
            }
            SchemaRecord::EpisodicRef { id } => {
                if id >= stream.len() {
                    return Err(Error::Consistency(format!(
                        "schema references episodic node {id} of {}",
                        stream.len()
                    )));
                }
                episodic_refs.push(id);
            }
            SchemaRecord::Edge {
                edge_kind,
                src,
                dst,
                label,
            } => match edge_kind.as_str() {
                "semantic" => edges.push(SchemaEdge::Semantic {
                    src,
                    label: label.unwrap_or_default(),
                    dst,
                }),
                "grounding" => {
                    let node = src.parse::<usize>().map_err(|e| {
                        Error::Corruption(format!("grounding edge source `{src}`: {e}"))
                    })?;
                    if node >= stream.len() {
                        return Err(Error::Consistency(format!(
                            "grounding edge references episodic node {node} of {}",
                            stream.len()
                        )));
                    }
                    edges.push(SchemaEdge::Grounding { node, concept: dst });
                }
                other => {
                    return Err(Error::Corruption(format!("unknown edge kind `{other}`")))
                }
            },
        }
    }
    if concepts.len() != manifest.concept_count || con_rows.len() != manifest.concept_count {
        return Err(Error::Consistency("concept count mismatch".to_string()));
    }
    if edges.len() != manifest.edge_count {
        return Err(Error::Consistency("edge count mismatch".to_string()));
    }
    for edge in &edges {
        if let SchemaEdge::Semantic { src, dst, .. } = edge {
            if concepts.iter().all(|c| &c.id != src) || concepts.iter().all(|c| &c.id != dst) {
                return Err(Error::Consistency(format!(
                    "semantic edge {src} -> {dst} references an unknown concept"
                )));
            }
        }
    }

    Ok(MemoryPyramid {
        dim: manifest.dim,
        seed: manifest.seed,
        sensory,
        episodic: ConsolidationState { stream, action_log },
        schema: SchemaGraph {
            concepts,
            episodic_refs,
            edges,
        },
        build_config: manifest.config,
    })
}

/// Path of one snapshot file, for tooling (corruption tests, exports).
pub fn snapshot_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
