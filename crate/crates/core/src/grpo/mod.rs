//! Group-relative policy optimization over episodic-trace generation.
//!
//! Per-trace scalar reward (task score minus a length penalty and a
//! behavior/reference log-ratio penalty), standardized group-relative
//! advantages, and a PPO-style clipped surrogate with its analytic
//! gradient. [`policy`] holds the small tabular trace policy; [`trainer`]
//! runs the desk-scale training loop.

pub mod policy;
pub mod trainer;

use crate::error::{Error, Result};

/// One sampled trace with the log-probabilities needed for the update.
#[derive(Debug, Clone)]
pub struct TraceSample {
    /// State text: the sensory window plus the latest episodic memory.
    pub state: String,
    /// Content tokens of the generated trace (stop symbol excluded).
    pub trace_tokens: Vec<usize>,
    /// log pi_old(m|s): behavior snapshot the trace was sampled from.
    pub logprob_behavior: f64,
    /// log pi_ref(m|s): fixed reference policy.
    pub logprob_reference: f64,
    /// log pi_theta(m|s): recomputed under the current parameters.
    pub logprob_current: f64,
}

/// Reward decomposition. `total` recomposes exactly from its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub task: f64,
    pub length_penalty: f64,
    pub ratio_penalty: f64,
    pub total: f64,
}

/// Penalty coefficients and update knobs.
#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub clip_epsilon: f64,
    pub kl_penalty_coef: f64,
    pub group_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            beta1: 0.1,
            beta2: 0.3,
            clip_epsilon: 0.2,
            kl_penalty_coef: 0.1,
            group_size: 8,
            learning_rate: 0.1,
            epochs: 30,
            episodes_per_epoch: 16,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::Contract(format!(
                "group size must be at least 2, got {}",
                self.group_size
            )));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Contract(format!(
                "clip_epsilon must be in (0, 1), got {}",
                self.clip_epsilon
            )));
        }
        if self.beta1 < 0.0 || self.beta2 < 0.0 || self.kl_penalty_coef < 0.0 {
            return Err(Error::Contract(
                "penalty coefficients must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// Scalar reward for one trace: task score minus beta1 * Length(m) minus
/// beta2 * (log pi_old(m|s) - log pi_ref(m|s)). The log-ratio is evaluated
/// on the behavior sample, anchoring the policy to the reference.
pub fn trace_reward(sample: &TraceSample, task_score: f64, config: &PolicyConfig) -> RewardBreakdown {
    let length_penalty = config.beta1 * sample.trace_tokens.len() as f64;
    let ratio_penalty = config.beta2 * (sample.logprob_behavior - sample.logprob_reference);
    RewardBreakdown {
        task: task_score,
        length_penalty,
        ratio_penalty,
        total: task_score - length_penalty - ratio_penalty,
    }
}

/// Standardized group-relative advantages:
/// `(r_i - mean) / (population std + 1e-8)`, with an exact all-zero result
/// for zero-variance groups.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Contract(format!(
            "group advantages need at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// PPO-style clipped surrogate:
/// `J = mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)` with
/// `rho_i = exp(logprob_current - logprob_behavior)`.
pub fn clipped_objective(
    samples: &[TraceSample],
    advantages: &[f64],
    clip_epsilon: f64,
) -> Result<f64> {
    if samples.len() != advantages.len() || samples.is_empty() {
        return Err(Error::Contract(format!(
            "{} samples vs {} advantages",
            samples.len(),
            advantages.len()
        )));
    }
    let mut total = 0.0;
    for (i, (sample, &adv)) in samples.iter().zip(advantages.iter()).enumerate() {
        let rho = (sample.logprob_current - sample.logprob_behavior).exp();
        if !rho.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite importance ratio for sample {i} (logprobs {} / {})",
                sample.logprob_current, sample.logprob_behavior
            )));
        }
        let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
        total += (rho * adv).min(clipped * adv);
    }
    Ok(total / samples.len() as f64)
}

/// Per-sample weight of the objective gradient through
/// `d logprob_current / d theta`: `rho_i * A_i / G` when the unclipped
/// branch is active, zero when clipping has flattened it. Pairs with
/// [`policy::TablePolicy::accumulate_logprob_grad`] to form the full
/// analytic gradient of [`clipped_objective`].
pub fn clipped_objective_grad_weights(
    samples: &[TraceSample],
    advantages: &[f64],
    clip_epsilon: f64,
) -> Vec<f64> {
    let n = samples.len() as f64;
    samples
        .iter()
        .zip(advantages.iter())
        .map(|(sample, &adv)| {
            let rho = (sample.logprob_current - sample.logprob_behavior).exp();
            let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
            // Inside the trust region clip() is the identity, so the two
            // terms tie and the unclipped branch carries the gradient.
            if rho * adv <= clipped * adv {
                rho * adv / n
            } else {
                0.0
            }
        })
        .collect()
}
