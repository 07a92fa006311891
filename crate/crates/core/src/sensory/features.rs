//! Per-frame feature records: the pixel-free input path.
//!
//! File format is line-oriented UTF-8:
//! `clip_id<TAB>timestamp_ms<TAB>comma-separated f32 features`. Lines are
//! grouped into clips by id in order of first appearance; `#` starts a
//! comment. Inter-frame distance is the mean absolute difference over
//! feature components, mirroring the pixel path.

use std::path::Path;

use crate::adapters::{Captioner, Embedder, VisualPayload};
use crate::error::{Error, Result};
use crate::sensory::subtitles::SubtitleTrack;
use crate::sensory::{profile_from_distances, suppress_duplicates, SensoryItem, SensoryOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub index: usize,
    pub timestamp_ms: u64,
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClip {
    pub id: u64,
    pub frames: Vec<FeatureFrame>,
}

impl FeatureClip {
    pub fn new(id: u64, frames: Vec<FeatureFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Shape(format!("feature clip {id}: needs at least one frame")));
        }
        let dim = frames[0].features.len();
        if dim == 0 {
            return Err(Error::Shape(format!("feature clip {id}: empty feature vector")));
        }
        for pair in frames.windows(2) {
            if pair[1].features.len() != dim {
                return Err(Error::Shape(format!(
                    "feature clip {id}: inconsistent feature dimension at frame {}",
                    pair[1].index
                )));
            }
            if pair[1].timestamp_ms <= pair[0].timestamp_ms {
                return Err(Error::Shape(format!(
                    "feature clip {id}: timestamps must be strictly increasing at frame {}",
                    pair[1].index
                )));
            }
        }
        Ok(Self { id, frames })
    }
}

/// Mean absolute component difference between two feature vectors.
pub fn feature_distance(prev: &[f32], curr: &[f32]) -> Result<f64> {
    if prev.len() != curr.len() || prev.is_empty() {
        return Err(Error::Shape(format!(
            "feature vectors of length {} and {}",
            prev.len(),
            curr.len()
        )));
    }
    let sum: f64 = prev
        .iter()
        .zip(curr.iter())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / prev.len() as f64)
}

pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureClip>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut order: Vec<u64> = Vec::new();
    let mut groups: std::collections::HashMap<u64, Vec<FeatureFrame>> =
        std::collections::HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (id, ts, feats) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::Parse(format!(
                    "feature line {}: expected clip<TAB>timestamp<TAB>features",
                    lineno + 1
                )))
            }
        };
        let clip_id = id.trim().parse::<u64>().map_err(|e| {
            Error::Parse(format!("feature line {}: bad clip id: {e}", lineno + 1))
        })?;
        let timestamp_ms = ts.trim().parse::<u64>().map_err(|e| {
            Error::Parse(format!("feature line {}: bad timestamp: {e}", lineno + 1))
        })?;
        let features: Vec<f32> = feats
            .split(',')
            .map(|v| v.trim().parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| {
                Error::Parse(format!("feature line {}: bad feature value: {e}", lineno + 1))
            })?;
        let entry = groups.entry(clip_id).or_insert_with(|| {
            order.push(clip_id);
            Vec::new()
        });
        let index = entry.len();
        entry.push(FeatureFrame {
            index,
            timestamp_ms,
            features,
        });
    }
    order
        .into_iter()
        .map(|id| FeatureClip::new(id, groups.remove(&id).unwrap()))
        .collect()
}

pub fn write_feature_file(path: &Path, clips: &[FeatureClip]) -> Result<()> {
    let mut out = String::new();
    for clip in clips {
        for frame in &clip.frames {
            let feats: Vec<String> = frame.features.iter().map(|f| f.to_string()).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                clip.id,
                frame.timestamp_ms,
                feats.join(",")
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}

pub(crate) fn items_for_feature_clip(
    clip: &FeatureClip,
    opts: &SensoryOptions,
    embedder: &dyn Embedder,
    captioner: &dyn Captioner,
    subtitles: Option<&SubtitleTrack>,
) -> Result<Vec<SensoryItem>> {
    let centers = if clip.frames.len() == 1 {
        vec![0]
    } else {
        let mut distances = vec![None];
        for pair in clip.frames.windows(2) {
            distances.push(Some(feature_distance(&pair[0].features, &pair[1].features)?));
        }
        let profile = profile_from_distances(distances);
        let kept = suppress_duplicates(&profile.salient_with_distances(), opts.min_sep);
        if kept.is_empty() {
            vec![clip.frames.len() / 2]
        } else {
            kept
        }
    };

    let mut items = Vec::new();
    for center in centers {
        let start = center.saturating_sub(opts.half_width);
        let end = (center + opts.half_width).min(clip.frames.len() - 1);
        let payload = VisualPayload::Features {
            vectors: clip.frames[start..=end]
                .iter()
                .map(|f| f.features.clone())
                .collect(),
        };
        let visual = embedder
            .embed_visual(&payload)
            .map_err(|e| Error::Adapter(format!("clip {} index {center}: {e}", clip.id)))?;
        let span = (
            clip.frames[start].timestamp_ms,
            clip.frames[end].timestamp_ms,
        );
        let text_trace = if let Some(track) = subtitles {
            track.text_overlapping(span.0, span.1)
        } else {
            None
        };
        let text_trace = match text_trace {
            Some(t) => t,
            None => captioner
                .caption(clip.id, (start, end), &payload)
                .map_err(|e| Error::Adapter(format!("clip {} index {center}: {e}", clip.id)))?,
        };
        items.push(SensoryItem {
            visual,
            text_trace,
            timestamp_ms: clip.frames[center].timestamp_ms,
            window: (start, end),
            clip_id: clip.id,
        });
    }
    Ok(items)
}
