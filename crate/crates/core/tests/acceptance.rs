//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `--nocapture`). Stub adapters only; no
//! network.

mod common;

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pyramem::adapters::stub::{StubCaptioner, StubEmbedder, StubExtractor, StubScorer, UniformScorer};
use pyramem::adapters::{CandidateScorer, Captioner, Embedder, EntityExtractor};
use pyramem::episodic::{consolidate_with_rule, replay_actions, RuleThresholds};
use pyramem::grpo::policy::TablePolicy;
use pyramem::grpo::trainer::{evaluate_task_reward, train_toy, PlantedKeywordTask, ToyShape};
use pyramem::grpo::{clipped_objective, group_advantages, PolicyConfig, TraceSample};
use pyramem::ib;
use pyramem::pipeline::build_pyramid_from_clips;
use pyramem::retrieval::{answer, entropy, Query, RetrievalParams};
use pyramem::sensory::{saliency_profile, suppress_duplicates, SensoryItem};
use pyramem::store::{load_memory, save_memory};
use pyramem::util::l2_normalize;
use pyramem::EngineConfig;

fn pass(name: &str) {
    println!("ACCEPTANCE {name}: PASS");
}

// --- Criterion: IB bound suite --------------------------------------------

#[test]
fn criterion_ib_bound_suite() {
    let start = Instant::now();
    for i in 0..500u64 {
        let inst = ib::random_instance(7 + i, 8).unwrap();
        let report =
            ib::verify_bounds(&inst.joint, &inst.encoder, &inst.decoder, &inst.prior).unwrap();
        assert!(
            report.slack_pred >= -1e-9,
            "instance {i}: slack_pred {}",
            report.slack_pred
        );
        assert!(
            report.slack_comp >= -1e-9,
            "instance {i}: slack_comp {}",
            report.slack_comp
        );
    }
    // Tight case: optimal decoder and prior drive both slacks below 1e-9.
    let tight = ib::builtin_chain_instance();
    let report =
        ib::verify_bounds(&tight.joint, &tight.encoder, &tight.decoder, &tight.prior).unwrap();
    assert!(report.slack_pred.abs() < 1e-9);
    assert!(report.slack_comp.abs() < 1e-9);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    pass("ib-bound-suite");
}

// --- Criterion: keyframe oracle -------------------------------------------

#[test]
fn criterion_keyframe_oracle() {
    let start = Instant::now();
    let min_sep = 12;
    for seed in 0..100u64 {
        let (clip, planted) = common::planted_cut_stream(seed, min_sep);
        let profile = saliency_profile(&clip).unwrap();
        let selected = suppress_duplicates(&profile.salient_with_distances(), min_sep);
        assert_eq!(
            selected, planted,
            "seed {seed}: selected {selected:?}, planted {planted:?}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass("keyframe-oracle");
}

// --- Criterion: consolidation determinism & replay -------------------------

/// Random clustered buffer: items hover near a handful of anchor
/// directions so the rule policy takes all three action kinds.
fn random_buffer(seed: u64) -> Vec<SensoryItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let anchor_count = rng.gen_range(2..5);
    let anchors: Vec<Vec<f32>> = (0..anchor_count)
        .map(|_| {
            let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            l2_normalize(&mut v);
            v
        })
        .collect();
    let count = rng.gen_range(5..40);
    (0..count)
        .map(|i| {
            let anchor = &anchors[rng.gen_range(0..anchors.len())];
            let scale = rng.gen_range(0.0f32..0.6);
            let mut v: Vec<f32> = anchor
                .iter()
                .map(|&a| a + scale * rng.gen_range(-1.0f32..1.0))
                .collect();
            l2_normalize(&mut v);
            SensoryItem {
                visual: v,
                text_trace: format!("trace {i}"),
                timestamp_ms: (i as u64 + 1) * 100,
                window: (0, 0),
                clip_id: 0,
            }
        })
        .collect()
}

fn states_bit_identical(
    a: &pyramem::episodic::ConsolidationState,
    b: &pyramem::episodic::ConsolidationState,
) -> bool {
    if a.action_log != b.action_log || a.stream.len() != b.stream.len() {
        return false;
    }
    a.stream.iter().zip(b.stream.iter()).all(|(x, y)| {
        x.text == y.text
            && x.span_ms == y.span_ms
            && x.merged_count == y.merged_count
            && x.source_items == y.source_items
            && x.is_prototype == y.is_prototype
            && x.representation.len() == y.representation.len()
            && x.representation
                .iter()
                .zip(y.representation.iter())
                .all(|(p, q)| p.to_bits() == q.to_bits())
    })
}

#[test]
fn criterion_consolidation_determinism_and_replay() {
    let thresholds = RuleThresholds::default();
    for seed in 0..100u64 {
        let buffer = random_buffer(seed);
        let first = consolidate_with_rule(&buffer, thresholds).unwrap();
        let second = consolidate_with_rule(&buffer, thresholds).unwrap();
        assert!(
            states_bit_identical(&first, &second),
            "seed {seed}: two runs differ"
        );
        let replayed = replay_actions(&buffer, &first.action_log).unwrap();
        assert!(
            states_bit_identical(&first, &replayed),
            "seed {seed}: replay differs"
        );
    }
    pass("consolidation-determinism-replay");
}

// --- Criterion: merge conservation -----------------------------------------

#[test]
fn criterion_merge_conservation() {
    let mut merge_heavy_seen = false;
    for seed in 0..50u64 {
        let buffer = random_buffer(seed);
        let state = consolidate_with_rule(&buffer, RuleThresholds::default()).unwrap();
        for node in &state.stream {
            if node.merged_count >= 2 {
                merge_heavy_seen = true;
            }
            // representation * merged_count must equal the exact vector
            // sum of the source items' visuals, per coordinate.
            let mut expected = vec![0.0f64; node.representation.len()];
            for &src in &node.source_items {
                for (e, &v) in expected.iter_mut().zip(buffer[src].visual.iter()) {
                    *e += v as f64;
                }
            }
            for (d, (&r, &e)) in node
                .representation
                .iter()
                .zip(expected.iter())
                .enumerate()
                .map(|(d, p)| (d, p))
            {
                let got = r * node.merged_count as f64;
                assert!(
                    (got - e).abs() <= 1e-9,
                    "seed {seed} coordinate {d}: {got} vs {e}"
                );
            }
            // The node span covers every source item's timestamp.
            for &src in &node.source_items {
                let ts = buffer[src].timestamp_ms;
                assert!(node.span_ms.0 <= ts && ts <= node.span_ms.1);
            }
        }
    }
    assert!(merge_heavy_seen, "fixtures never exercised MERGE");
    pass("merge-conservation");
}

// --- Criterion: GRPO math ---------------------------------------------------

#[test]
fn criterion_grpo_math() {
    // Zero mean, unit population variance within 1e-6.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 20 {
        let g = rng.gen_range(2..12);
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = rewards.iter().sum::<f64>() / g as f64;
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g as f64;
        if var.sqrt() < 0.05 {
            continue;
        }
        checked += 1;
        let adv = group_advantages(&rewards).unwrap();
        let a_mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let a_var = adv.iter().map(|a| (a - a_mean) * (a - a_mean)).sum::<f64>() / adv.len() as f64;
        assert!(a_mean.abs() < 1e-9, "mean {a_mean}");
        assert!((a_var - 1.0).abs() < 1e-6, "variance {a_var}");
    }

    // Shift invariance of the clipped objective under r -> r + c.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let g = rng.gen_range(2..10);
        let samples: Vec<TraceSample> = (0..g)
            .map(|i| {
                let behavior = rng.gen_range(-3.0..-0.5);
                TraceSample {
                    state: format!("s{i}"),
                    trace_tokens: vec![0; rng.gen_range(0..5)],
                    logprob_behavior: behavior,
                    logprob_reference: behavior,
                    logprob_current: behavior + rng.gen_range(-0.4..0.4),
                }
            })
            .collect();
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let shift = rng.gen_range(-20.0..20.0);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let j1 = clipped_objective(&samples, &group_advantages(&rewards).unwrap(), 0.2).unwrap();
        let j2 = clipped_objective(&samples, &group_advantages(&shifted).unwrap(), 0.2).unwrap();
        assert!((j1 - j2).abs() < 1e-9, "shift broke J: {j1} vs {j2}");
    }

    // Analytic gradient of J vs central finite differences: 50 random
    // instances, vector-norm relative error within 1e-4. Instances whose
    // importance ratios sit on the clip boundary are regenerated (the
    // objective is non-differentiable exactly there).
    let clip_eps = 0.2;
    let mut valid = 0;
    let mut seed = 0u64;
    while valid < 50 {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + seed);
        let vocab = 3;
        let buckets = 2;
        let mut policy = TablePolicy::uniform(vocab, buckets);
        for p in policy.params_mut() {
            *p = rng.gen_range(-0.5..0.5);
        }
        let behavior = {
            let mut b = policy.clone();
            for p in b.params_mut() {
                *p += rng.gen_range(-0.2..0.2);
            }
            b
        };
        let state = format!("state-{seed}");
        let g = 6;
        let mut samples = Vec::with_capacity(g);
        let mut sample_rng = ChaCha8Rng::seed_from_u64(9_000 + seed);
        for _ in 0..g {
            let tokens = behavior.sample(&state, 6, &mut sample_rng);
            samples.push(TraceSample {
                state: state.clone(),
                trace_tokens: tokens.clone(),
                logprob_behavior: behavior.logprob(&state, &tokens).unwrap(),
                logprob_reference: 0.0,
                logprob_current: policy.logprob(&state, &tokens).unwrap(),
            });
        }
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let advantages = group_advantages(&rewards).unwrap();
        let near_boundary = samples.iter().any(|s| {
            let rho = (s.logprob_current - s.logprob_behavior).exp();
            (rho - (1.0 - clip_eps)).abs() < 1e-3 || (rho - (1.0 + clip_eps)).abs() < 1e-3
        });
        if near_boundary {
            continue;
        }
        valid += 1;

        let objective_at = |p: &TablePolicy| -> f64 {
            let current: Vec<TraceSample> = samples
                .iter()
                .map(|s| TraceSample {
                    logprob_current: p.logprob(&s.state, &s.trace_tokens).unwrap(),
                    ..s.clone()
                })
                .collect();
            clipped_objective(&current, &advantages, clip_eps).unwrap()
        };

        // Analytic gradient through d logprob_current / d theta.
        let mut analytic = vec![0.0; policy.param_count()];
        let weights = {
            let current: Vec<TraceSample> = samples
                .iter()
                .map(|s| TraceSample {
                    logprob_current: policy.logprob(&s.state, &s.trace_tokens).unwrap(),
                    ..s.clone()
                })
                .collect();
            pyramem::grpo::clipped_objective_grad_weights(&current, &advantages, clip_eps)
        };
        for (s, &w) in samples.iter().zip(weights.iter()) {
            if w != 0.0 {
                policy
                    .accumulate_logprob_grad(&s.state, &s.trace_tokens, w, &mut analytic)
                    .unwrap();
            }
        }

        let h = 1e-6;
        let mut fd = vec![0.0; policy.param_count()];
        for i in 0..policy.param_count() {
            let mut plus = policy.clone();
            plus.params_mut()[i] += h;
            let mut minus = policy.clone();
            minus.params_mut()[i] -= h;
            fd[i] = (objective_at(&plus) - objective_at(&minus)) / (2.0 * h);
        }
        let diff: f64 = analytic
            .iter()
            .zip(fd.iter())
            .map(|(a, f)| (a - f) * (a - f))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt().max(1e-8);
        assert!(
            diff / scale < 1e-4,
            "instance {seed}: gradient relative error {}",
            diff / scale
        );
    }
    pass("grpo-math");
}

// --- Criterion: toy training -----------------------------------------------

#[test]
fn criterion_toy_training() {
    let start = Instant::now();
    let shape = ToyShape {
        vocab: 6,
        buckets: 4,
        max_trace_len: 16,
    };
    let task = PlantedKeywordTask::new(shape.vocab, shape.buckets);
    let config = PolicyConfig {
        beta1: 0.05,
        beta2: 0.02,
        clip_epsilon: 0.2,
        kl_penalty_coef: 0.02,
        group_size: 8,
        learning_rate: 0.15,
        epochs: 60,
        episodes_per_epoch: 16,
    };

    // Random-policy baseline over 200 episodes.
    let uniform = TablePolicy::uniform(shape.vocab, shape.buckets);
    let baseline = evaluate_task_reward(&uniform, &task, shape.max_trace_len, 200, 17).unwrap();
    assert!(baseline <= 0.3, "random baseline scored {baseline}");

    let report = train_toy(&task, shape, &config, 42).unwrap();
    assert!(
        report.last().mean_reward >= 0.8,
        "final mean reward {}",
        report.last().mean_reward
    );
    assert!(
        report.last().mean_task >= 0.8,
        "final mean task reward {}",
        report.last().mean_task
    );

    // Beta1 sweep at a fixed seed: stronger length penalties can only
    // shorten the final traces.
    let mut lengths = Vec::new();
    for beta1 in [0.0, 0.1, 0.5] {
        let cfg = PolicyConfig {
            beta1,
            ..config.clone()
        };
        let sweep = train_toy(&task, shape, &cfg, 42).unwrap();
        lengths.push(sweep.last().mean_length);
    }
    assert!(
        lengths[0] >= lengths[1] && lengths[1] >= lengths[2],
        "lengths not non-increasing: {lengths:?}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    pass("toy-sib-grpo-training");
}

// --- Criterion: retrieval controller ----------------------------------------

fn fixture_pyramid() -> pyramem::MemoryPyramid {
    let (clips, track) = common::two_clip_fixture();
    let mut config = EngineConfig::default();
    config.segment_frames = 50;
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
fn criterion_retrieval_controller() {
    let pyramid = fixture_pyramid();
    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let four_way = Query::new(
        "who waves",
        vec!["alice".into(), "carol".into(), "dave".into(), "erin".into()],
    )
    .unwrap();
    let no_overlap = Query::new(
        "who waves",
        vec!["w".into(), "x".into(), "y".into(), "z".into()],
    )
    .unwrap();

    // gamma = ln 4: every 4-way query stops after step 1.
    let max_entropy = RetrievalParams {
        gamma: 4.0f64.ln(),
        ..RetrievalParams::default()
    };
    for (query, scorer) in [
        (&four_way, &StubScorer::new() as &dyn CandidateScorer),
        (&no_overlap, &UniformScorer as &dyn CandidateScorer),
    ] {
        let (_, _, trace) = answer(query, &pyramid, &embedder, scorer, &max_entropy).unwrap();
        assert_eq!(trace.evidence_steps(), 1, "did not stop after step 1");
        assert_eq!(trace.steps[1].layer, "symbolic");
    }

    // gamma = 0.72: the uniform scorer holds H at ln 4 and exhausts all
    // three layers; the lowest-index candidate wins the argmax tie.
    let params = RetrievalParams::default();
    let (index, state, trace) =
        answer(&no_overlap, &pyramid, &embedder, &UniformScorer, &params).unwrap();
    assert_eq!(trace.evidence_steps(), 3);
    assert_eq!(index, 0);
    for h in &state.entropy_history {
        assert!((h - 1.3863).abs() < 1e-3, "H drifted: {h}");
        assert!(*h > 0.72);
    }

    // The concentrating scorer stops at the symbolic layer.
    let (index, state, trace) =
        answer(&four_way, &pyramid, &embedder, &StubScorer::new(), &params).unwrap();
    assert_eq!(trace.evidence_steps(), 1);
    assert_eq!(trace.steps[1].layer, "symbolic");
    assert_eq!(index, 0);
    assert!(*state.entropy_history.last().unwrap() <= 0.72);

    pass("retrieval-controller");
}

// --- Criterion: entropy unit values -----------------------------------------

#[test]
fn criterion_entropy_units() {
    assert!((entropy(&[0.25; 4]).unwrap() - 1.3863).abs() < 1e-4);
    assert_eq!(entropy(&[0.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
    assert!((entropy(&[0.7, 0.1, 0.1, 0.1]).unwrap() - 0.9405).abs() < 1e-4);
    pass("entropy-units");
}

// --- Criterion: persistence --------------------------------------------------

#[test]
fn criterion_persistence() {
    // Full fixture pyramid, plus a merge-heavy one for the f64 path.
    let pyramid = fixture_pyramid();

    let dir = tempfile::tempdir().unwrap();
    save_memory(&pyramid, dir.path()).unwrap();
    let loaded = load_memory(dir.path()).unwrap();
    assert_eq!(loaded.dim, pyramid.dim);
    assert_eq!(loaded.sensory, pyramid.sensory);
    assert_eq!(loaded.schema, pyramid.schema);
    assert_eq!(loaded.build_config, pyramid.build_config);
    assert_eq!(loaded.episodic.action_log, pyramid.episodic.action_log);
    for (a, b) in pyramid
        .episodic
        .stream
        .iter()
        .zip(loaded.episodic.stream.iter())
    {
        assert_eq!(a.text, b.text);
        assert_eq!(a.span_ms, b.span_ms);
        assert_eq!(a.merged_count, b.merged_count);
        assert_eq!(a.source_items, b.source_items);
        assert_eq!(a.is_prototype, b.is_prototype);
        // Representations persist at the format's f32 precision, exactly.
        for (x, y) in a.representation.iter().zip(b.representation.iter()) {
            assert_eq!((*x as f32) as f64, *y);
        }
    }

    // Double save: identical digests.
    let dir2 = tempfile::tempdir().unwrap();
    let m1 = save_memory(&pyramid, dir.path()).unwrap();
    let m2 = save_memory(&pyramid, dir2.path()).unwrap();
    assert_eq!(m1.digests, m2.digests);

    // One flipped byte in any embedding blob is caught on load.
    for target in ["sensory.emb", "episodic.emb", "concept.emb"] {
        let dir = tempfile::tempdir().unwrap();
        save_memory(&pyramid, dir.path()).unwrap();
        let path = dir.path().join(target);
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_memory(dir.path()).unwrap_err();
        assert!(
            matches!(err, pyramem::Error::Corruption(_)),
            "{target}: expected corruption error, got {err}"
        );
    }
    pass("persistence");
}

// --- Criterion: hermeticity ---------------------------------------------------

#[test]
fn criterion_hermeticity() {
    // Every adapter used by this suite is a deterministic stub.
    let embedder = StubEmbedder::new(64, 42);
    assert!(embedder.info().deterministic);
    assert_eq!(embedder.info().dimension, Some(64));
    assert!(Captioner::info(&StubCaptioner).deterministic);
    assert!(EntityExtractor::info(&StubExtractor).deterministic);
    assert!(CandidateScorer::info(&StubScorer::new()).deterministic);
    assert!(CandidateScorer::info(&UniformScorer).deterministic);

    // Fixed seed + stubs: the whole build is byte-reproducible.
    let a = fixture_pyramid();
    let b = fixture_pyramid();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let ma = save_memory(&a, dir_a.path()).unwrap();
    let mb = save_memory(&b, dir_b.path()).unwrap();
    assert_eq!(ma.digests, mb.digests);
    pass("hermeticity");
}
