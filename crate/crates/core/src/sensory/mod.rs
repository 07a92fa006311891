//! Sensory buffer construction.
//!
//! Turns a decoded frame stream (or precomputed per-frame features) into
//! salient key sub-clips: per-clip inter-frame distances, an adaptive
//! mean-plus-sigma threshold, near-duplicate suppression, then one
//! embedded, captioned [`SensoryItem`] per kept index. Clips without any
//! salient index contribute one item at their center frame so every clip
//! stays represented.

pub mod features;
pub mod framedump;
pub mod subtitles;

use rayon::prelude::*;

use crate::adapters::{Captioner, Embedder, VisualPayload};
use crate::error::{Error, Result};
use crate::sensory::features::FeatureClip;
use crate::sensory::subtitles::SubtitleTrack;

/// One decoded frame. Pixel values are channel bytes in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp_ms: u64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(
        index: usize,
        timestamp_ms: u64,
        height: usize,
        width: usize,
        channels: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        let expected = height * width * channels;
        if expected == 0 {
            return Err(Error::Shape("frame dimensions must be positive".to_string()));
        }
        if pixels.len() != expected {
            return Err(Error::Shape(format!(
                "frame {index}: expected {expected} pixel bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            index,
            timestamp_ms,
            height,
            width,
            channels,
            pixels,
        })
    }

    fn same_shape(&self, other: &Frame) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
    }
}

/// An ordered run of frames sharing dimensions, with strictly increasing
/// timestamps covered by `source_span_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: u64,
    pub frames: Vec<Frame>,
    pub source_span_ms: (u64, u64),
}

impl Clip {
    pub fn new(id: u64, frames: Vec<Frame>, source_span_ms: (u64, u64)) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Shape(format!("clip {id}: needs at least one frame")));
        }
        for pair in frames.windows(2) {
            if !pair[0].same_shape(&pair[1]) {
                return Err(Error::Shape(format!(
                    "clip {id}: frames {} and {} have different dimensions",
                    pair[0].index, pair[1].index
                )));
            }
            if pair[1].timestamp_ms <= pair[0].timestamp_ms {
                return Err(Error::Shape(format!(
                    "clip {id}: timestamps must be strictly increasing at frame {}",
                    pair[1].index
                )));
            }
        }
        let (lo, hi) = source_span_ms;
        if lo > frames[0].timestamp_ms || hi < frames[frames.len() - 1].timestamp_ms {
            return Err(Error::Shape(format!(
                "clip {id}: span does not cover frame timestamps"
            )));
        }
        Ok(Self {
            id,
            frames,
            source_span_ms,
        })
    }

    /// Convenience constructor with the span snapped to the frames.
    pub fn from_frames(id: u64, frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Shape(format!("clip {id}: needs at least one frame")));
        }
        let span = (
            frames[0].timestamp_ms,
            frames[frames.len() - 1].timestamp_ms,
        );
        Self::new(id, frames, span)
    }
}

/// Per-clip inter-frame distance statistics. `distances[0]` is absent
/// because the first frame has no predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyProfile {
    pub distances: Vec<Option<f64>>,
    pub mean_mu: f64,
    pub std_sigma: f64,
    pub threshold: f64,
}

impl SaliencyProfile {
    /// Indices whose distance strictly exceeds the adaptive threshold.
    pub fn salient_indices(&self) -> Vec<usize> {
        self.distances
            .iter()
            .enumerate()
            .filter_map(|(i, d)| match d {
                Some(d) if *d > self.threshold => Some(i),
                _ => None,
            })
            .collect()
    }

    /// (index, distance) pairs for the salient set.
    pub fn salient_with_distances(&self) -> Vec<(usize, f64)> {
        self.salient_indices()
            .into_iter()
            .map(|i| (i, self.distances[i].unwrap()))
            .collect()
    }
}

/// One entry of the sensory buffer: a key sub-clip's visual embedding,
/// text trace and center-frame timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SensoryItem {
    pub visual: Vec<f32>,
    pub text_trace: String,
    pub timestamp_ms: u64,
    /// Start/end frame indices of the key sub-clip within its clip.
    pub window: (usize, usize),
    pub clip_id: u64,
}

/// Mean absolute per-channel difference between two frames.
pub fn frame_distance(prev: &Frame, curr: &Frame) -> Result<f64> {
    if !prev.same_shape(curr) {
        return Err(Error::Shape(format!(
            "frames {} and {} have different dimensions",
            prev.index, curr.index
        )));
    }
    let sum: u64 = prev
        .pixels
        .iter()
        .zip(curr.pixels.iter())
        .map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs())
        .sum();
    Ok(sum as f64 / prev.pixels.len() as f64)
}

/// Mean/population-sigma statistics over the defined distances.
pub(crate) fn profile_from_distances(distances: Vec<Option<f64>>) -> SaliencyProfile {
    let defined: Vec<f64> = distances.iter().filter_map(|d| *d).collect();
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    SaliencyProfile {
        distances,
        mean_mu: mean,
        std_sigma: std,
        threshold: mean + std,
    }
}

/// Pairwise frame distances plus the adaptive salient-index threshold.
pub fn saliency_profile(clip: &Clip) -> Result<SaliencyProfile> {
    if clip.frames.len() < 2 {
        return Err(Error::Shape(format!(
            "clip {}: saliency needs at least two frames",
            clip.id
        )));
    }
    let mut distances = vec![None];
    for pair in clip.frames.windows(2) {
        distances.push(Some(frame_distance(&pair[0], &pair[1])?));
    }
    Ok(profile_from_distances(distances))
}

/// Greedy near-duplicate suppression.
///
/// Indices are visited in decreasing-distance order (ties by ascending
/// index) and kept only when at least `min_sep` frames from every index
/// kept so far. The result is sorted ascending.
pub fn suppress_duplicates(salient: &[(usize, f64)], min_sep: usize) -> Vec<usize> {
    debug_assert!(min_sep >= 1);
    let mut order: Vec<(usize, f64)> = salient.to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = Vec::new();
    for (idx, _) in order {
        if kept
            .iter()
            .all(|&k| k.abs_diff(idx) >= min_sep)
        {
            kept.push(idx);
        }
    }
    kept.sort_unstable();
    kept
}

/// Knobs for sensory buffer construction.
#[derive(Debug, Clone, Copy)]
pub struct SensoryOptions {
    /// Key sub-clip half-width in frames.
    pub half_width: usize,
    /// Minimum separation between kept salient indices.
    pub min_sep: usize,
}

impl Default for SensoryOptions {
    fn default() -> Self {
        Self {
            half_width: 4,
            min_sep: 12,
        }
    }
}

/// Indices an item will be emitted for: the suppressed salient set, or
/// the clip center when that set is empty.
fn keyframe_indices(clip: &Clip, opts: &SensoryOptions) -> Result<Vec<usize>> {
    if clip.frames.len() == 1 {
        return Ok(vec![0]);
    }
    let profile = saliency_profile(clip)?;
    let kept = suppress_duplicates(&profile.salient_with_distances(), opts.min_sep);
    if kept.is_empty() {
        Ok(vec![clip.frames.len() / 2])
    } else {
        Ok(kept)
    }
}

fn window_around(center: usize, half_width: usize, len: usize) -> (usize, usize) {
    let start = center.saturating_sub(half_width);
    let end = (center + half_width).min(len - 1);
    (start, end)
}

fn pixel_window_payload(clip: &Clip, window: (usize, usize)) -> VisualPayload {
    let f0 = &clip.frames[0];
    let mut data = Vec::new();
    for frame in &clip.frames[window.0..=window.1] {
        data.extend_from_slice(&frame.pixels);
    }
    VisualPayload::Pixels {
        height: f0.height,
        width: f0.width,
        channels: f0.channels,
        data,
    }
}

fn text_for_window(
    clip_id: u64,
    window: (usize, usize),
    window_span_ms: (u64, u64),
    payload: &VisualPayload,
    captioner: &dyn Captioner,
    subtitles: Option<&SubtitleTrack>,
) -> Result<String> {
    if let Some(track) = subtitles {
        if let Some(text) = track.text_overlapping(window_span_ms.0, window_span_ms.1) {
            return Ok(text);
        }
    }
    captioner
        .caption(clip_id, window, payload)
        .map_err(|e| Error::Adapter(format!("clip {clip_id} window {window:?}: {e}")))
}

fn items_for_clip(
    clip: &Clip,
    opts: &SensoryOptions,
    embedder: &dyn Embedder,
    captioner: &dyn Captioner,
    subtitles: Option<&SubtitleTrack>,
) -> Result<Vec<SensoryItem>> {
    let mut items = Vec::new();
    for center in keyframe_indices(clip, opts)? {
        let window = window_around(center, opts.half_width, clip.frames.len());
        let payload = pixel_window_payload(clip, window);
        let visual = embedder
            .embed_visual(&payload)
            .map_err(|e| Error::Adapter(format!("clip {} index {center}: {e}", clip.id)))?;
        let span = (
            clip.frames[window.0].timestamp_ms,
            clip.frames[window.1].timestamp_ms,
        );
        let text_trace = text_for_window(clip.id, window, span, &payload, captioner, subtitles)?;
        items.push(SensoryItem {
            visual,
            text_trace,
            timestamp_ms: clip.frames[center].timestamp_ms,
            window,
            clip_id: clip.id,
        });
    }
    Ok(items)
}

fn finish_buffer(mut items: Vec<SensoryItem>, dim: usize) -> Result<Vec<SensoryItem>> {
    for item in &items {
        if item.visual.len() != dim {
            return Err(Error::Shape(format!(
                "embedder returned dimension {} for clip {}, expected {dim}",
                item.visual.len(),
                item.clip_id
            )));
        }
    }
    items.sort_by_key(|i| (i.timestamp_ms, i.clip_id, i.window.0));
    Ok(items)
}

/// Build the sensory buffer from decoded pixel clips. Clips are processed
/// in parallel; the final buffer is ordered by timestamp.
pub fn build_sensory_buffer(
    clips: &[Clip],
    opts: &SensoryOptions,
    embedder: &dyn Embedder,
    captioner: &dyn Captioner,
    subtitles: Option<&SubtitleTrack>,
) -> Result<Vec<SensoryItem>> {
    let per_clip: Vec<Result<Vec<SensoryItem>>> = clips
        .par_iter()
        .map(|clip| items_for_clip(clip, opts, embedder, captioner, subtitles))
        .collect();
    let mut items = Vec::new();
    for result in per_clip {
        items.extend(result?);
    }
    finish_buffer(items, embedder.dimension())
}

/// Same pipeline over precomputed per-frame feature vectors.
pub fn build_sensory_buffer_from_features(
    clips: &[FeatureClip],
    opts: &SensoryOptions,
    embedder: &dyn Embedder,
    captioner: &dyn Captioner,
    subtitles: Option<&SubtitleTrack>,
) -> Result<Vec<SensoryItem>> {
    let per_clip: Vec<Result<Vec<SensoryItem>>> = clips
        .par_iter()
        .map(|clip| features::items_for_feature_clip(clip, opts, embedder, captioner, subtitles))
        .collect();
    let mut items = Vec::new();
    for result in per_clip {
        items.extend(result?);
    }
    finish_buffer(items, embedder.dimension())
}

/// Fixed-length fallback segmentation for streams arriving without clip
/// boundaries.
pub fn segment_frames(frames: Vec<Frame>, max_len: usize) -> Result<Vec<Clip>> {
    debug_assert!(max_len >= 1);
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let mut clips = Vec::new();
    let mut id = 0u64;
    let mut iter = frames.into_iter().peekable();
    let mut chunk: Vec<Frame> = Vec::with_capacity(max_len);
    while let Some(frame) = iter.next() {
        chunk.push(frame);
        if chunk.len() == max_len || iter.peek().is_none() {
            clips.push(Clip::from_frames(id, std::mem::take(&mut chunk))?);
            id += 1;
        }
    }
    Ok(clips)
}
