//! Hierarchical multimodal memory engine.
//!
//! Builds a three-layer memory pyramid from timestamped frame or feature
//! streams: a *sensory buffer* of salient key sub-clips, an *episodic
//! stream* consolidated by a single chronological pass, and a *symbolic
//! schema* knowledge graph with grounding pointers back into the episodic
//! layer. Questions are answered by entropy-gated top-down retrieval that
//! drills from the schema toward raw sensory evidence only while the
//! answer posterior stays uncertain.
//!
//! Two verification-oriented subsystems ship alongside the pipeline:
//! [`ib`] checks the variational information-bottleneck bounds behind the
//! consolidation objective by exact enumeration, and [`grpo`] implements
//! the group-relative policy optimization math (reward shaping, group
//! advantages, clipped surrogate) with a desk-scale tabular trainer.
//!
//! All model-dependent steps go through [`adapters`]; the bundled stubs
//! are deterministic, so every pipeline output is byte-reproducible under
//! a fixed seed and the whole test suite runs without a network.

pub mod adapters;
pub mod config;
pub mod episodic;
pub mod error;
pub mod grpo;
pub mod ib;
pub mod pipeline;
pub mod retrieval;
pub mod schema;
pub mod sensory;
pub mod store;
pub mod util;

pub use config::EngineConfig;
pub use error::{Error, Result};
pub use store::MemoryPyramid;
