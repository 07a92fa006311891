//! Command implementations. Each returns the process exit code on its
//! success path; errors map to codes in `main`.

use std::path::{Path, PathBuf};

use pyramem::adapters::stub::{StubCaptioner, StubEmbedder, StubExtractor, StubScorer};
use pyramem::episodic::Action;
use pyramem::error::{Error, Result};
use pyramem::grpo::policy::write_checkpoint;
use pyramem::grpo::trainer::{train_toy as run_train, PlantedKeywordTask, ToyShape};
use pyramem::grpo::PolicyConfig;
use pyramem::ib;
use pyramem::pipeline;
use pyramem::retrieval::{self, Query, RetrievalParams};
use pyramem::schema::SchemaEdge;
use pyramem::sensory::{features, framedump, segment_frames, subtitles::SubtitleTrack};
use pyramem::store;
use pyramem::EngineConfig;

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::from_file(p),
        None => Ok(EngineConfig::default()),
    }
}

fn require_input(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Parse(format!(
            "input file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

pub fn build(
    frames: Option<PathBuf>,
    features_path: Option<PathBuf>,
    subtitles: Option<PathBuf>,
    out: PathBuf,
    config_path: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<u8> {
    let mut config = load_config(config_path.as_deref())?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let track = match &subtitles {
        Some(path) => {
            require_input(path)?;
            Some(SubtitleTrack::from_file(path)?)
        }
        None => None,
    };
    let embedder = StubEmbedder::new(config.embed_dim, config.seed);
    let captioner = StubCaptioner;
    let extractor = StubExtractor;

    let pyramid = match (&frames, &features_path) {
        (Some(path), None) => {
            require_input(path)?;
            let all_frames = framedump::read_frame_dump(path)?;
            let clips = segment_frames(all_frames, config.segment_frames)?;
            pipeline::build_pyramid_from_clips(
                &clips,
                track.as_ref(),
                &config,
                &embedder,
                &captioner,
                &extractor,
            )?
        }
        (None, Some(path)) => {
            require_input(path)?;
            let clips = features::read_feature_file(path)?;
            pipeline::build_pyramid_from_features(
                &clips,
                track.as_ref(),
                &config,
                &embedder,
                &captioner,
                &extractor,
            )?
        }
        _ => {
            return Err(Error::Parse(
                "exactly one of --frames or --features is required".to_string(),
            ))
        }
    };

    store::save_memory(&pyramid, &out)?;
    println!(
        "sensory={} episodic={} concepts={}",
        pyramid.sensory.len(),
        pyramid.episodic.stream.len(),
        pyramid.schema.concepts.len()
    );
    Ok(0)
}

pub fn query(
    mem: PathBuf,
    question: String,
    choices: Vec<String>,
    trace_path: Option<PathBuf>,
    config_path: Option<PathBuf>,
    gamma: Option<f64>,
) -> Result<u8> {
    let config = load_config(config_path.as_deref())?;
    let query = Query::new(question, choices)?;
    let pyramid = store::load_memory(&mem)?;
    let embedder = StubEmbedder::new(pyramid.dim, pyramid.seed);
    let scorer = StubScorer::new();
    let mut params = RetrievalParams {
        gamma: config.gamma,
        epsilon_h: config.epsilon_h,
        patience: config.patience,
        top_k_sym: config.top_k_sym,
        top_k_epi: config.top_k_epi,
        top_k_sen: config.top_k_sen,
    };
    if let Some(gamma) = gamma {
        params.gamma = gamma;
    }
    let (index, _state, trace) = retrieval::answer(&query, &pyramid, &embedder, &scorer, &params)?;
    if let Some(path) = trace_path {
        trace.write_to(&path)?;
    }
    println!("answer={} letter={}", index, (b'A' + index as u8) as char);
    Ok(0)
}

pub fn verify_ib(
    instances: u64,
    seed: u64,
    instance_file: Option<PathBuf>,
    builtin_chain: bool,
) -> Result<u8> {
    if let Some(path) = instance_file {
        require_input(&path)?;
        let inst = ib::Instance::from_file(&path)?;
        let report = ib::verify_bounds(&inst.joint, &inst.encoder, &inst.decoder, &inst.prior)?;
        print!("{}", report.to_kv_lines());
        return Ok(if report.slack_pred >= -1e-9 && report.slack_comp >= -1e-9 {
            0
        } else {
            1
        });
    }
    if builtin_chain {
        let inst = ib::builtin_chain_instance();
        let report = ib::verify_bounds(&inst.joint, &inst.encoder, &inst.decoder, &inst.prior)?;
        println!("slacks {:.1} {:.1}", report.slack_pred, report.slack_comp);
        print!("{}", report.to_kv_lines());
        return Ok(0);
    }
    if instances < 1 {
        return Err(Error::Contract("--instances must be at least 1".to_string()));
    }
    let mut worst_pred = f64::INFINITY;
    let mut worst_comp = f64::INFINITY;
    for i in 0..instances {
        let inst = ib::random_instance(seed.wrapping_add(i), 8)?;
        let report = ib::verify_bounds(&inst.joint, &inst.encoder, &inst.decoder, &inst.prior)?;
        worst_pred = worst_pred.min(report.slack_pred);
        worst_comp = worst_comp.min(report.slack_comp);
        if report.slack_pred < -1e-9 || report.slack_comp < -1e-9 {
            let dump = PathBuf::from(format!("ib-violation-{}.txt", seed.wrapping_add(i)));
            inst.write_to(&dump)?;
            eprintln!(
                "bound violated on instance {} (slack_pred={}, slack_comp={}); serialized to {}",
                i,
                report.slack_pred,
                report.slack_comp,
                dump.display()
            );
            return Ok(1);
        }
    }
    println!("instances={instances} worst_slack_pred={worst_pred:.3e} worst_slack_comp={worst_comp:.3e}");
    Ok(0)
}

pub fn train_toy(
    config_path: Option<PathBuf>,
    seed: u64,
    report_path: PathBuf,
    checkpoint: Option<PathBuf>,
) -> Result<u8> {
    let config = load_config(config_path.as_deref())?;
    let task = PlantedKeywordTask::new(config.vocab, config.buckets);
    let shape = ToyShape {
        vocab: config.vocab,
        buckets: config.buckets,
        max_trace_len: config.max_trace_len,
    };
    let policy_config = PolicyConfig {
        beta1: config.beta1,
        beta2: config.beta2,
        clip_epsilon: config.clip_epsilon,
        kl_penalty_coef: config.kl_penalty_coef,
        group_size: config.group_size,
        learning_rate: config.learning_rate,
        epochs: config.epochs,
        episodes_per_epoch: config.episodes_per_epoch,
    };
    let report = run_train(&task, shape, &policy_config, seed)?;
    report.write_to(&report_path)?;
    let checkpoint_path =
        checkpoint.unwrap_or_else(|| report_path.with_extension("mmpo"));
    write_checkpoint(&checkpoint_path, &report.final_policy)?;
    println!(
        "epochs={} final_mean_reward={:.6} final_mean_task={:.6} final_mean_length={:.4}",
        report.epochs.len(),
        report.last().mean_reward,
        report.last().mean_task,
        report.last().mean_length
    );
    Ok(0)
}

pub fn stats(mem: PathBuf) -> Result<u8> {
    let pyramid = store::load_memory(&mem)?;
    let node_count = pyramid.episodic.stream.len();
    let mean_merge = if node_count == 0 {
        0.0
    } else {
        pyramid
            .episodic
            .stream
            .iter()
            .map(|n| n.merged_count as f64)
            .sum::<f64>()
            / node_count as f64
    };
    // Histogram of grounding degree per concept.
    let mut degree_counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for concept in &pyramid.schema.concepts {
        let degree = pyramid.schema.pointers(&concept.id).len();
        *degree_counts.entry(degree).or_insert(0) += 1;
    }
    let hist: Vec<String> = degree_counts
        .iter()
        .map(|(deg, count)| format!("{deg}:{count}"))
        .collect();
    println!(
        "sensory={} episodic={} concepts={}",
        pyramid.sensory.len(),
        node_count,
        pyramid.schema.concepts.len()
    );
    println!("mean_merge={mean_merge:.4}");
    println!("degree_hist={}", hist.join(","));
    Ok(0)
}

pub fn export_graph(mem: PathBuf, out: PathBuf) -> Result<u8> {
    let pyramid = store::load_memory(&mem)?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io_at(&out, e))?;
    // The schema record file is re-emitted verbatim from the snapshot.
    let rec = std::fs::read(store::snapshot_file(&mem, store::FILE_SCHEMA_REC))
        .map_err(|e| Error::io_at(mem.join(store::FILE_SCHEMA_REC), e))?;
    std::fs::write(out.join("graph.rec"), rec).map_err(|e| Error::io_at(&out, e))?;

    let mut edges = String::new();
    for edge in &pyramid.schema.edges {
        match edge {
            SchemaEdge::Semantic { src, label, dst } => {
                edges.push_str(&format!("{src}\t{label}\t{dst}\n"));
            }
            SchemaEdge::Grounding { node, concept } => {
                edges.push_str(&format!("epi:{node}\tgrounds\t{concept}\n"));
            }
        }
    }
    std::fs::write(out.join("edges.tsv"), edges).map_err(|e| Error::io_at(&out, e))?;
    println!(
        "concepts={} edges={} actions={}",
        pyramid.schema.concepts.len(),
        pyramid.schema.edges.len(),
        pyramid
            .episodic
            .action_log
            .iter()
            .filter(|a| **a != Action::Discard)
            .count()
    );
    Ok(0)
}
