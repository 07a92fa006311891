//! End-to-end pipeline tests: synthetic frames in, answered queries out,
//! everything on deterministic stubs.

mod common;

use pyramem::adapters::stub::{StubCaptioner, StubEmbedder, StubExtractor, StubScorer, UniformScorer};
use pyramem::adapters::Embedder;
use pyramem::pipeline::build_pyramid_from_clips;
use pyramem::retrieval::{answer, render_evidence, Layer, Query, RetrievalParams};
use pyramem::store::{load_memory, save_memory};
use pyramem::EngineConfig;

use common::two_clip_fixture;

fn fixture_config() -> EngineConfig {
    let mut config = EngineConfig::default();
    config.segment_frames = 50;
    config
}

fn build_fixture() -> pyramem::MemoryPyramid {
    let (clips, track) = two_clip_fixture();
    let config = fixture_config();
    let embedder = StubEmbedder::new(config.embed_dim, config.seed);
    build_pyramid_from_clips(
        &clips,
        Some(&track),
        &config,
        &embedder,
        &StubCaptioner,
        &StubExtractor,
    )
    .unwrap()
}

#[test]
fn fixture_builds_expected_layer_counts() {
    let pyramid = build_fixture();
    assert_eq!(pyramid.sensory.len(), 2);
    assert_eq!(pyramid.episodic.stream.len(), 2);
    assert_eq!(pyramid.schema.concepts.len(), 2);
    // Subtitles, not captions, became the text traces.
    assert_eq!(pyramid.sensory[0].text_trace, "ALICE waves");
    assert_eq!(pyramid.sensory[1].text_trace, "BOB jumps");
    assert_eq!(pyramid.sensory[0].timestamp_ms, 260);
    assert_eq!(pyramid.sensory[1].timestamp_ms, 760);
    let ids: Vec<&str> = pyramid.schema.concepts.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, vec!["alice", "bob"]);
    // At least one prototype is flagged after clustering.
    assert!(pyramid.episodic.stream.iter().any(|n| n.is_prototype));
}

#[test]
fn concentrating_query_stops_at_symbolic() {
    let pyramid = build_fixture();
    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let query = Query::new(
        "who waves",
        vec!["alice".into(), "carol".into(), "dave".into(), "erin".into()],
    )
    .unwrap();
    let (index, state, trace) = answer(
        &query,
        &pyramid,
        &embedder,
        &StubScorer::new(),
        &RetrievalParams::default(),
    )
    .unwrap();
    assert_eq!(index, 0);
    assert_eq!(trace.evidence_steps(), 1);
    assert_eq!(trace.steps[1].layer, "symbolic");
    assert_eq!(trace.steps[1].decision, "stop");
    assert!(*state.entropy_history.last().unwrap() <= 0.72);
}

#[test]
fn uniform_scorer_runs_all_layers_and_tie_breaks() {
    let pyramid = build_fixture();
    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let query = Query::new(
        "who waves",
        vec!["w".into(), "x".into(), "y".into(), "z".into()],
    )
    .unwrap();
    let (index, state, trace) = answer(
        &query,
        &pyramid,
        &embedder,
        &UniformScorer,
        &RetrievalParams::default(),
    )
    .unwrap();
    assert_eq!(index, 0);
    assert_eq!(trace.evidence_steps(), 3);
    let layers: Vec<&str> = trace.steps[1..].iter().map(|s| s.layer.as_str()).collect();
    assert_eq!(layers, vec!["symbolic", "episodic", "sensory"]);
    // H held at ln 4 the whole way.
    for h in &state.entropy_history {
        assert!((h - 4.0f64.ln()).abs() < 1e-9);
    }
}

#[test]
fn episodic_layer_respects_grounding_restriction() {
    let pyramid = build_fixture();
    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let query = Query::new("who waves", vec!["alice".into(), "bob".into()]).unwrap();
    // Retrieve symbolic first, then episodic with k = 1.
    let symbolic = pyramem::retrieval::retrieve_layer(
        Layer::Symbolic,
        &query,
        &pyramid,
        &embedder,
        1,
        &[],
        1,
    )
    .unwrap();
    assert_eq!(symbolic.items.len(), 1);
    let allowed = pyramid.schema.pointers(&symbolic.items[0].id);
    let episodic = pyramem::retrieval::retrieve_layer(
        Layer::Episodic,
        &query,
        &pyramid,
        &embedder,
        2,
        std::slice::from_ref(&symbolic),
        2,
    )
    .unwrap();
    // Restriction: only nodes grounded by the retrieved concept qualify.
    for item in &episodic.items {
        let node_id: usize = item.id.parse().unwrap();
        assert!(allowed.contains(&node_id));
    }
}

#[test]
fn sensory_layer_scores_clips_by_max_item_cosine() {
    let pyramid = build_fixture();
    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let query = Query::new("anything at all", vec!["a".into(), "b".into()]).unwrap();
    let bundle = pyramem::retrieval::retrieve_layer(
        Layer::Sensory,
        &query,
        &pyramid,
        &embedder,
        1,
        &[],
        1,
    )
    .unwrap();
    assert_eq!(bundle.items.len(), 1);
    // The reported score is the max cosine over that clip's items.
    let q = embedder.embed_text("anything at all").unwrap();
    let clip_id: u64 = bundle.items[0].id.parse().unwrap();
    let best = pyramid
        .sensory
        .iter()
        .filter(|i| i.clip_id == clip_id)
        .map(|i| pyramem::util::cosine_f32(&q, &i.visual))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((bundle.items[0].score - best).abs() < 1e-12);
}

#[test]
fn evidence_fed_to_scorer_is_exactly_the_bundles() {
    use std::sync::Mutex;

    struct RecordingScorer {
        calls: Mutex<Vec<Vec<String>>>,
    }
    impl pyramem::adapters::CandidateScorer for RecordingScorer {
        fn score(
            &self,
            _q: &str,
            evidence: &[String],
            candidates: &[String],
        ) -> pyramem::Result<Vec<f64>> {
            self.calls.lock().unwrap().push(evidence.to_vec());
            Ok(vec![0.0; candidates.len()])
        }
        fn info(&self) -> pyramem::adapters::AdapterInfo {
            pyramem::adapters::AdapterInfo {
                capabilities: vec![pyramem::adapters::Capability::ScoreCandidates],
                dimension: None,
                deterministic: true,
            }
        }
    }

    let pyramid = build_fixture();
    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let scorer = RecordingScorer {
        calls: Mutex::new(Vec::new()),
    };
    let query = Query::new("who waves", vec!["a".into(), "b".into()]).unwrap();
    let (_, state, _) = answer(
        &query,
        &pyramid,
        &embedder,
        &scorer,
        &RetrievalParams::default(),
    )
    .unwrap();
    let calls = scorer.calls.lock().unwrap();
    // Init call sees no evidence; each later call sees exactly the
    // accumulated bundles, no hidden context.
    assert!(calls[0].is_empty());
    let expected = render_evidence(&state.evidence);
    assert_eq!(*calls.last().unwrap(), expected);
}

#[test]
fn saved_fixture_answers_identically_after_load() {
    let pyramid = build_fixture();
    let dir = tempfile::tempdir().unwrap();
    save_memory(&pyramid, dir.path()).unwrap();
    let loaded = load_memory(dir.path()).unwrap();

    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let query = Query::new(
        "who waves",
        vec!["alice".into(), "carol".into(), "dave".into(), "erin".into()],
    )
    .unwrap();
    let params = RetrievalParams::default();
    let scorer = StubScorer::new();
    let (a_idx, a_state, a_trace) = answer(&query, &pyramid, &embedder, &scorer, &params).unwrap();
    let (b_idx, b_state, b_trace) = answer(&query, &loaded, &embedder, &scorer, &params).unwrap();
    assert_eq!(a_idx, b_idx);
    assert_eq!(a_state.probs, b_state.probs);
    assert_eq!(a_trace.to_jsonl(), b_trace.to_jsonl());
}

#[test]
fn gamma_zero_runs_until_plateau_or_exhaustion() {
    // With gamma = 0 the entropy gate can never fire; retrieval ends by
    // plateau or by running out of layers.
    let pyramid = build_fixture();
    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let params = RetrievalParams {
        gamma: 0.0,
        ..RetrievalParams::default()
    };
    let query = Query::new(
        "who waves",
        vec!["w".into(), "x".into(), "y".into(), "z".into()],
    )
    .unwrap();
    let (_, state, trace) = answer(&query, &pyramid, &embedder, &UniformScorer, &params).unwrap();
    assert_eq!(trace.evidence_steps(), 3);
    assert!(*state.entropy_history.last().unwrap() > 0.0);

    let concentrated = Query::new(
        "who waves",
        vec!["alice".into(), "carol".into(), "dave".into(), "erin".into()],
    )
    .unwrap();
    let (_, state, trace) =
        answer(&concentrated, &pyramid, &embedder, &StubScorer::new(), &params).unwrap();
    // The gate never stops it early; at least two layers run.
    assert!(trace.evidence_steps() >= 2);
    assert!(*state.entropy_history.last().unwrap() > 0.0);
}

#[test]
fn build_is_deterministic_end_to_end() {
    let a = build_fixture();
    let b = build_fixture();
    assert_eq!(a, b);
}
