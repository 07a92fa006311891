//! End-to-end memory construction: frames (or features) in, pyramid out.

use crate::adapters::{Captioner, Embedder, EntityExtractor};
use crate::config::EngineConfig;
use crate::episodic::kmeans::cluster_prototypes;
use crate::episodic::{consolidate_with_rule, RuleThresholds};
use crate::error::Result;
use crate::schema::{build_schema, SchemaGraph};
use crate::sensory::features::FeatureClip;
use crate::sensory::subtitles::SubtitleTrack;
use crate::sensory::{
    build_sensory_buffer, build_sensory_buffer_from_features, Clip, SensoryItem, SensoryOptions,
};
use crate::store::MemoryPyramid;

fn consolidate_and_index(
    sensory: Vec<SensoryItem>,
    config: &EngineConfig,
    embedder: &dyn Embedder,
    extractor: &dyn EntityExtractor,
) -> Result<MemoryPyramid> {
    let thresholds = RuleThresholds {
        theta_merge: config.theta_merge,
        theta_discard: config.theta_discard,
    };
    let mut episodic = consolidate_with_rule(&sensory, thresholds)?;
    if !episodic.stream.is_empty() {
        let k = if config.cluster_k == 0 {
            None
        } else {
            Some(config.cluster_k)
        };
        episodic.stream = cluster_prototypes(&episodic, k, config.seed);
    }
    let schema = if episodic.stream.is_empty() {
        SchemaGraph::default()
    } else {
        build_schema(&episodic.stream, extractor, embedder, config.merge_threshold)?
    };
    Ok(MemoryPyramid {
        dim: embedder.dimension(),
        seed: config.seed,
        sensory,
        episodic,
        schema,
        build_config: config.to_pairs(),
    })
}

/// Build the full pyramid from decoded pixel clips.
pub fn build_pyramid_from_clips(
    clips: &[Clip],
    subtitles: Option<&SubtitleTrack>,
    config: &EngineConfig,
    embedder: &dyn Embedder,
    captioner: &dyn Captioner,
    extractor: &dyn EntityExtractor,
) -> Result<MemoryPyramid> {
    let opts = SensoryOptions {
        half_width: config.half_width,
        min_sep: config.min_sep,
    };
    let sensory = build_sensory_buffer(clips, &opts, embedder, captioner, subtitles)?;
    consolidate_and_index(sensory, config, embedder, extractor)
}

/// Build the full pyramid from precomputed per-frame features.
pub fn build_pyramid_from_features(
    clips: &[FeatureClip],
    subtitles: Option<&SubtitleTrack>,
    config: &EngineConfig,
    embedder: &dyn Embedder,
    captioner: &dyn Captioner,
    extractor: &dyn EntityExtractor,
) -> Result<MemoryPyramid> {
    let opts = SensoryOptions {
        half_width: config.half_width,
        min_sep: config.min_sep,
    };
    let sensory =
        build_sensory_buffer_from_features(clips, &opts, embedder, captioner, subtitles)?;
    consolidate_and_index(sensory, config, embedder, extractor)
}
