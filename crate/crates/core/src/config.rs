//! Engine configuration.
//!
//! One flat key=value file configures every stage. Unknown keys are
//! rejected and values are range-checked so a typo fails the run instead
//! of silently using a default. `#` starts a comment; blank lines are
//! ignored.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Seed for every stochastic component (stub embedder, clustering,
    /// instance generation, toy training).
    pub seed: u64,
    /// Embedding dimension produced by the stub embedder.
    pub embed_dim: usize,
    /// Fixed-length fallback segmentation for flat frame streams.
    pub segment_frames: usize,
    /// Key sub-clip half-width in frames.
    pub half_width: usize,
    /// Minimum temporal separation between kept salient indices.
    pub min_sep: usize,
    /// Consolidation: merge when cosine to latest node is at least this.
    pub theta_merge: f64,
    /// Consolidation: add-new when cosine is at most this.
    pub theta_discard: f64,
    /// Prototype cluster count; 0 means ceil(sqrt(n)).
    pub cluster_k: usize,
    /// Gloss-embedding cosine needed to unify two prototypes.
    pub merge_threshold: f64,
    /// Entropy stop threshold in nats.
    pub gamma: f64,
    /// Entropy-plateau threshold in nats.
    pub epsilon_h: f64,
    /// Consecutive plateau steps needed to stop.
    pub patience: u32,
    pub top_k_sym: usize,
    pub top_k_epi: usize,
    pub top_k_sen: usize,
    /// Trace length penalty coefficient.
    pub beta1: f64,
    /// Behavior/reference log-ratio penalty coefficient.
    pub beta2: f64,
    /// PPO clipping range.
    pub clip_epsilon: f64,
    /// Loss-level KL penalty toward the reference policy.
    pub kl_penalty_coef: f64,
    /// Traces sampled per state for group-relative advantages.
    pub group_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    /// Content-token vocabulary of the toy policy (stop symbol excluded).
    pub vocab: usize,
    /// Hashed state feature buckets of the toy policy.
    pub buckets: usize,
    pub max_trace_len: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            embed_dim: 64,
            segment_frames: 300,
            half_width: 4,
            min_sep: 12,
            theta_merge: 0.85,
            theta_discard: 0.30,
            cluster_k: 0,
            merge_threshold: 0.90,
            gamma: 0.72,
            epsilon_h: 0.01,
            patience: 2,
            top_k_sym: 5,
            top_k_epi: 2,
            top_k_sen: 1,
            beta1: 0.1,
            beta2: 0.3,
            clip_epsilon: 0.2,
            kl_penalty_coef: 0.1,
            group_size: 8,
            learning_rate: 0.1,
            epochs: 30,
            episodes_per_epoch: 16,
            vocab: 12,
            buckets: 8,
            max_trace_len: 32,
        }
    }
}

macro_rules! parse_val {
    ($key:expr, $val:expr, $ty:ty) => {
        $val.parse::<$ty>()
            .map_err(|e| Error::Config(format!("key `{}`: bad value `{}`: {e}", $key, $val)))?
    };
}

impl EngineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{raw}`", lineno + 1))
            })?;
            cfg.set(key.trim(), val.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, val: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_val!(key, val, u64),
            "embed_dim" => self.embed_dim = parse_val!(key, val, usize),
            "segment_frames" => self.segment_frames = parse_val!(key, val, usize),
            "half_width" => self.half_width = parse_val!(key, val, usize),
            "min_sep" => self.min_sep = parse_val!(key, val, usize),
            "theta_merge" => self.theta_merge = parse_val!(key, val, f64),
            "theta_discard" => self.theta_discard = parse_val!(key, val, f64),
            "cluster_k" => self.cluster_k = parse_val!(key, val, usize),
            "merge_threshold" => self.merge_threshold = parse_val!(key, val, f64),
            "gamma" => self.gamma = parse_val!(key, val, f64),
            "epsilon_h" => self.epsilon_h = parse_val!(key, val, f64),
            "patience" => self.patience = parse_val!(key, val, u32),
            "top_k_sym" => self.top_k_sym = parse_val!(key, val, usize),
            "top_k_epi" => self.top_k_epi = parse_val!(key, val, usize),
            "top_k_sen" => self.top_k_sen = parse_val!(key, val, usize),
            "beta1" => self.beta1 = parse_val!(key, val, f64),
            "beta2" => self.beta2 = parse_val!(key, val, f64),
            "clip_epsilon" => self.clip_epsilon = parse_val!(key, val, f64),
            "kl_penalty_coef" => self.kl_penalty_coef = parse_val!(key, val, f64),
            "group_size" => self.group_size = parse_val!(key, val, usize),
            "learning_rate" => self.learning_rate = parse_val!(key, val, f64),
            "epochs" => self.epochs = parse_val!(key, val, usize),
            "episodes_per_epoch" => self.episodes_per_epoch = parse_val!(key, val, usize),
            "vocab" => self.vocab = parse_val!(key, val, usize),
            "buckets" => self.buckets = parse_val!(key, val, usize),
            "max_trace_len" => self.max_trace_len = parse_val!(key, val, usize),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        }
        check(self.embed_dim >= 2, "embed_dim must be >= 2")?;
        check(self.segment_frames >= 1, "segment_frames must be >= 1")?;
        check(self.min_sep >= 1, "min_sep must be >= 1")?;
        check(
            (-1.0..=1.0).contains(&self.theta_merge),
            "theta_merge must be in [-1, 1]",
        )?;
        check(
            (-1.0..=1.0).contains(&self.theta_discard),
            "theta_discard must be in [-1, 1]",
        )?;
        check(
            (-1.0..=1.0).contains(&self.merge_threshold),
            "merge_threshold must be in [-1, 1]",
        )?;
        check(self.gamma >= 0.0, "gamma must be >= 0")?;
        check(self.epsilon_h >= 0.0, "epsilon_h must be >= 0")?;
        check(self.patience >= 1, "patience must be >= 1")?;
        check(self.top_k_sym >= 1, "top_k_sym must be >= 1")?;
        check(self.top_k_epi >= 1, "top_k_epi must be >= 1")?;
        check(self.top_k_sen >= 1, "top_k_sen must be >= 1")?;
        check(self.beta1 >= 0.0, "beta1 must be >= 0")?;
        check(self.beta2 >= 0.0, "beta2 must be >= 0")?;
        check(
            self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0,
            "clip_epsilon must be in (0, 1)",
        )?;
        check(self.kl_penalty_coef >= 0.0, "kl_penalty_coef must be >= 0")?;
        check(self.group_size >= 2, "group_size must be >= 2")?;
        check(self.learning_rate > 0.0, "learning_rate must be > 0")?;
        check(self.epochs >= 1, "epochs must be >= 1")?;
        check(self.episodes_per_epoch >= 1, "episodes_per_epoch must be >= 1")?;
        check(self.vocab >= 2, "vocab must be >= 2")?;
        check(self.buckets >= 1, "buckets must be >= 1")?;
        check(self.max_trace_len >= 1, "max_trace_len must be >= 1")?;
        Ok(())
    }

    /// All settings as sorted key/value pairs, as echoed into snapshot
    /// manifests.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("beta1".to_string(), self.beta1.to_string()),
            ("beta2".to_string(), self.beta2.to_string()),
            ("buckets".to_string(), self.buckets.to_string()),
            ("clip_epsilon".to_string(), self.clip_epsilon.to_string()),
            ("cluster_k".to_string(), self.cluster_k.to_string()),
            ("embed_dim".to_string(), self.embed_dim.to_string()),
            ("episodes_per_epoch".to_string(), self.episodes_per_epoch.to_string()),
            ("epochs".to_string(), self.epochs.to_string()),
            ("epsilon_h".to_string(), self.epsilon_h.to_string()),
            ("gamma".to_string(), self.gamma.to_string()),
            ("group_size".to_string(), self.group_size.to_string()),
            ("half_width".to_string(), self.half_width.to_string()),
            ("kl_penalty_coef".to_string(), self.kl_penalty_coef.to_string()),
            ("learning_rate".to_string(), self.learning_rate.to_string()),
            ("max_trace_len".to_string(), self.max_trace_len.to_string()),
            ("merge_threshold".to_string(), self.merge_threshold.to_string()),
            ("min_sep".to_string(), self.min_sep.to_string()),
            ("patience".to_string(), self.patience.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("segment_frames".to_string(), self.segment_frames.to_string()),
            ("theta_discard".to_string(), self.theta_discard.to_string()),
            ("theta_merge".to_string(), self.theta_merge.to_string()),
            ("top_k_epi".to_string(), self.top_k_epi.to_string()),
            ("top_k_sen".to_string(), self.top_k_sen.to_string()),
            ("top_k_sym".to_string(), self.top_k_sym.to_string()),
            ("vocab".to_string(), self.vocab.to_string()),
        ];
        pairs.sort();
        pairs
    }
}
