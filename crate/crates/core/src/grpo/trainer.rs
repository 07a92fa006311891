//! Desk-scale training loop for the tabular trace policy.
//!
//! Each epoch snapshots the behavior policy, samples `group_size` traces
//! per episode state, scores them (task judge plus length and log-ratio
//! penalties), standardizes advantages within the group, and ascends the
//! clipped surrogate minus a KL penalty toward the fixed reference policy
//! by the exact analytic gradient.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapters::{AdapterInfo, Capability, TraceJudge};
use crate::error::{Error, Result};
use crate::grpo::policy::{state_bucket, TablePolicy};
use crate::grpo::{
    clipped_objective, group_advantages, clipped_objective_grad_weights, trace_reward, PolicyConfig,
    TraceSample,
};

/// Produces episode states for the toy consolidation task.
pub trait ToyTask: Send + Sync {
    fn sample_state(&self, rng: &mut ChaCha8Rng) -> String;
    fn judge(&self) -> &dyn TraceJudge;
}

/// Planted-keyword task: each state's bucket determines one keyword token
/// the trace must lead with. A trace earns task reward 1 when its first
/// token is the planted keyword: the downstream lookup can answer from the
/// trace alone.
pub struct PlantedKeywordTask {
    vocab: usize,
    buckets: usize,
    judge: KeywordJudge,
}

impl PlantedKeywordTask {
    pub fn new(vocab: usize, buckets: usize) -> Self {
        Self {
            vocab,
            buckets,
            judge: KeywordJudge { vocab, buckets },
        }
    }

    pub fn keyword_for(&self, state: &str) -> usize {
        state_bucket(state, self.buckets) % self.vocab
    }
}

impl ToyTask for PlantedKeywordTask {
    fn sample_state(&self, rng: &mut ChaCha8Rng) -> String {
        format!("ctx-{}", rng.gen::<u32>())
    }

    fn judge(&self) -> &dyn TraceJudge {
        &self.judge
    }
}

/// Judges `1.0` when the trace's first token names the state's keyword.
pub struct KeywordJudge {
    vocab: usize,
    buckets: usize,
}

impl TraceJudge for KeywordJudge {
    fn judge(&self, state: &str, trace: &str) -> Result<f64> {
        let keyword = state_bucket(state, self.buckets) % self.vocab;
        let first = trace.split_whitespace().next();
        Ok(match first {
            Some(tok) if tok == format!("t{keyword}") => 1.0,
            _ => 0.0,
        })
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::Judge],
            dimension: None,
            deterministic: true,
        }
    }
}

/// One epoch's aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean penalized reward over the epoch's sampled traces.
    pub mean_reward: f64,
    /// Mean task (judge) reward; the penalties excluded.
    pub mean_task: f64,
    pub mean_length: f64,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub final_policy: TablePolicy,
}

impl TrainingReport {
    pub fn first(&self) -> &EpochStats {
        self.epochs.first().expect("training ran at least one epoch")
    }

    pub fn last(&self) -> &EpochStats {
        self.epochs.last().expect("training ran at least one epoch")
    }

    /// Line-delimited key=value records, one per epoch.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&format!(
                "epoch={} mean_reward={:.6} mean_task={:.6} mean_length={:.4} j={:.6} grad_norm={:.6}\n",
                e.epoch, e.mean_reward, e.mean_task, e.mean_length, e.objective, e.grad_norm
            ));
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io_at(path, e))
    }
}

/// Shape of the toy policy and sampling.
#[derive(Debug, Clone, Copy)]
pub struct ToyShape {
    pub vocab: usize,
    pub buckets: usize,
    pub max_trace_len: usize,
}

impl Default for ToyShape {
    fn default() -> Self {
        Self {
            vocab: 12,
            buckets: 8,
            max_trace_len: 32,
        }
    }
}

/// Seeded training run. The reference policy is the uniform initial
/// table; the behavior policy is re-snapshotted every epoch.
pub fn train_toy(
    task: &dyn ToyTask,
    shape: ToyShape,
    config: &PolicyConfig,
    seed: u64,
) -> Result<TrainingReport> {
    config.validate()?;
    let reference = TablePolicy::uniform(shape.vocab, shape.buckets);
    let mut policy = reference.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let behavior = policy.clone();
        let mut reward_sum = 0.0;
        let mut task_sum = 0.0;
        let mut length_sum = 0.0;
        let mut objective_sum = 0.0;
        let mut grad_norm_sum = 0.0;
        let mut trace_count = 0usize;

        for _ in 0..config.episodes_per_epoch {
            let state = task.sample_state(&mut rng);
            let mut samples = Vec::with_capacity(config.group_size);
            let mut rewards = Vec::with_capacity(config.group_size);
            for _ in 0..config.group_size {
                let tokens = behavior.sample(&state, shape.max_trace_len, &mut rng);
                let logprob_behavior = behavior.logprob(&state, &tokens)?;
                let logprob_reference = reference.logprob(&state, &tokens)?;
                let sample = TraceSample {
                    state: state.clone(),
                    trace_tokens: tokens.clone(),
                    logprob_behavior,
                    logprob_reference,
                    logprob_current: policy.logprob(&state, &tokens)?,
                };
                let task_score = task
                    .judge()
                    .judge(&state, &TablePolicy::trace_text(&tokens))
                    .map_err(|e| Error::Adapter(format!("judge failed: {e}")))?;
                let breakdown = trace_reward(&sample, task_score, config);
                reward_sum += breakdown.total;
                task_sum += task_score;
                length_sum += tokens.len() as f64;
                rewards.push(breakdown.total);
                samples.push(sample);
                trace_count += 1;
            }

            let advantages = group_advantages(&rewards)?;
            objective_sum += clipped_objective(&samples, &advantages, config.clip_epsilon)?;

            // Ascent direction: d/dtheta [J - kl_coef * KL_k3(ref || cur)].
            let mut grad = vec![0.0; policy.param_count()];
            let weights = clipped_objective_grad_weights(&samples, &advantages, config.clip_epsilon);
            for (sample, &w) in samples.iter().zip(weights.iter()) {
                if w != 0.0 {
                    policy.accumulate_logprob_grad(&sample.state, &sample.trace_tokens, w, &mut grad)?;
                }
            }
            if config.kl_penalty_coef > 0.0 {
                let per_sample = config.kl_penalty_coef / samples.len() as f64;
                for sample in &samples {
                    let log_ratio = sample.logprob_reference - sample.logprob_current;
                    // d/dtheta [exp(r) - r - 1] = (1 - exp(r)) * dlogprob.
                    let w = per_sample * (1.0 - log_ratio.exp());
                    policy.accumulate_logprob_grad(&sample.state, &sample.trace_tokens, -w, &mut grad)?;
                }
            }

            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            grad_norm_sum += norm;
            for (p, g) in policy.params_mut().iter_mut().zip(grad.iter()) {
                *p += config.learning_rate * g;
            }
            if policy.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    detail: "policy parameters became non-finite".to_string(),
                });
            }
        }

        let n = trace_count as f64;
        let episodes = config.episodes_per_epoch as f64;
        epochs.push(EpochStats {
            epoch,
            mean_reward: reward_sum / n,
            mean_task: task_sum / n,
            mean_length: length_sum / n,
            objective: objective_sum / episodes,
            grad_norm: grad_norm_sum / episodes,
        });
    }

    Ok(TrainingReport {
        epochs,
        final_policy: policy,
    })
}

/// Mean task reward of a policy over `episodes` fresh states, one sampled
/// trace each. Used for the random-policy baseline and final evaluation.
pub fn evaluate_task_reward(
    policy: &TablePolicy,
    task: &dyn ToyTask,
    max_trace_len: usize,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let state = task.sample_state(&mut rng);
        let tokens = policy.sample(&state, max_trace_len, &mut rng);
        total += task
            .judge()
            .judge(&state, &TablePolicy::trace_text(&tokens))?;
    }
    Ok(total / episodes as f64)
}
