//! Shared synthetic fixtures for integration tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pyramem::sensory::subtitles::SubtitleTrack;
use pyramem::sensory::{Clip, Frame};

/// Piecewise-constant clip: all pixels hold one level per segment, with
/// hard cuts at the given frame indices. Timestamps are `(i+1) * step_ms`
/// offset by `ts_offset`.
pub fn piecewise_clip(
    id: u64,
    frame_count: usize,
    cuts: &[usize],
    levels: &[u8],
    ts_offset: u64,
    step_ms: u64,
) -> Clip {
    assert_eq!(levels.len(), cuts.len() + 1);
    let mut frames = Vec::with_capacity(frame_count);
    for i in 0..frame_count {
        let segment = cuts.iter().filter(|&&c| i >= c).count();
        let level = levels[segment];
        frames.push(
            Frame::new(
                i,
                ts_offset + (i as u64 + 1) * step_ms,
                4,
                4,
                3,
                vec![level; 48],
            )
            .unwrap(),
        );
    }
    Clip::from_frames(id, frames).unwrap()
}

/// The two-clip fixture used across pipeline and CLI tests: one hard cut
/// per clip, subtitle lines aligned with both cut windows.
///
/// Clip 0: frames 0..50 at 10..500 ms, cut at index 25 (t = 260 ms).
/// Clip 1: frames 0..50 at 510..1000 ms, cut at index 25 (t = 760 ms).
pub fn two_clip_fixture() -> (Vec<Clip>, SubtitleTrack) {
    let clips = vec![
        piecewise_clip(0, 50, &[25], &[20, 160], 0, 10),
        piecewise_clip(1, 50, &[25], &[60, 200], 500, 10),
    ];
    let track =
        SubtitleTrack::from_str_contents("220\t300\tALICE waves\n720\t800\tBOB jumps\n").unwrap();
    (clips, track)
}

/// Seeded stream with planted hard cuts separated by at least `min_sep`.
/// Cut magnitudes are confined to [100, 140] so every planted cut clears
/// the mean-plus-sigma threshold with a wide margin. Returns the clip and
/// the planted cut indices.
#[allow(dead_code)] // not every test target drives this generator
pub fn planted_cut_stream(seed: u64, min_sep: usize) -> (Clip, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame_count = rng.gen_range(60..160);
    let max_cuts = ((frame_count - 2) / min_sep).min(6).max(1);
    let cut_count = rng.gen_range(1..=max_cuts);

    let mut cuts: Vec<usize> = Vec::new();
    let mut guard = 0;
    while cuts.len() < cut_count && guard < 10_000 {
        guard += 1;
        let candidate = rng.gen_range(1..frame_count);
        if cuts.iter().all(|&c| c.abs_diff(candidate) >= min_sep) {
            cuts.push(candidate);
        }
    }
    cuts.sort_unstable();

    // Alternate between a low base and a high level; every jump magnitude
    // stays in [100, 140], keeping cut distances within a 1.4x ratio of
    // each other so none sinks under the adaptive threshold.
    let low = rng.gen_range(0u8..=60);
    let mut levels: Vec<u8> = vec![low];
    for _ in &cuts {
        let last = *levels.last().unwrap();
        if last == low {
            levels.push(low + rng.gen_range(100u8..=140));
        } else {
            levels.push(low);
        }
    }
    let clip = piecewise_clip(seed, frame_count, &cuts, &levels, 0, 20);
    (clip, cuts)
}
