//! Tabular autoregressive trace policy.
//!
//! The desk-scale stand-in for a fine-tuned trace generator: a logit table
//! indexed by (hashed state bucket, previous symbol, next symbol). Symbols
//! `0..vocab-1` are content tokens; symbol `vocab` doubles as the
//! begin-of-trace context and the stop symbol, so a trace's probability is
//! the product of its token conditionals times the terminal stop
//! conditional. Log-probabilities and gradients are exact.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::fnv1a_64;

/// Deterministic state-to-bucket feature hash shared by policies and task
/// generators.
pub fn state_bucket(state: &str, buckets: usize) -> usize {
    (fnv1a_64(state.as_bytes()) % buckets as u64) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct TablePolicy {
    /// Content vocabulary size; the symbol table is `vocab + 1` wide.
    pub vocab: usize,
    pub buckets: usize,
    /// Logits, indexed `[bucket][prev_symbol][next_symbol]`.
    logits: Vec<f64>,
}

impl TablePolicy {
    /// Uniform-initialized policy (all logits zero).
    pub fn uniform(vocab: usize, buckets: usize) -> Self {
        let symbols = vocab + 1;
        Self {
            vocab,
            buckets,
            logits: vec![0.0; buckets * symbols * symbols],
        }
    }

    pub fn stop_symbol(&self) -> usize {
        self.vocab
    }

    fn symbols(&self) -> usize {
        self.vocab + 1
    }

    pub fn param_count(&self) -> usize {
        self.logits.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.logits
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn row_offset(&self, bucket: usize, prev: usize) -> usize {
        (bucket * self.symbols() + prev) * self.symbols()
    }

    pub fn set_logit(&mut self, bucket: usize, prev: usize, next: usize, value: f64) {
        let offset = self.row_offset(bucket, prev);
        self.logits[offset + next] = value;
    }

    /// Softmax over one conditional row.
    fn row_probs(&self, bucket: usize, prev: usize) -> Vec<f64> {
        let offset = self.row_offset(bucket, prev);
        let row = &self.logits[offset..offset + self.symbols()];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.iter().map(|e| e / total).collect()
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        for &t in tokens {
            if t >= self.vocab {
                return Err(Error::Contract(format!(
                    "token {t} outside vocabulary of {}",
                    self.vocab
                )));
            }
        }
        Ok(())
    }

    /// Exact log-probability of a trace: the autoregressive product over
    /// its content tokens plus the terminal stop conditional.
    pub fn logprob(&self, state: &str, tokens: &[usize]) -> Result<f64> {
        self.check_tokens(tokens)?;
        let bucket = state_bucket(state, self.buckets);
        let mut prev = self.stop_symbol();
        let mut logprob = 0.0;
        for &t in tokens {
            logprob += self.row_probs(bucket, prev)[t].ln();
            prev = t;
        }
        logprob += self.row_probs(bucket, prev)[self.stop_symbol()].ln();
        Ok(logprob)
    }

    /// Sample a trace. Sampling is capped at `max_len` content tokens;
    /// the cap is a sampling guard, not part of the probability model.
    pub fn sample(&self, state: &str, max_len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let bucket = state_bucket(state, self.buckets);
        let mut tokens = Vec::new();
        let mut prev = self.stop_symbol();
        while tokens.len() < max_len {
            let probs = self.row_probs(bucket, prev);
            let mut target = rng.gen::<f64>();
            let mut symbol = self.stop_symbol();
            for (s, &p) in probs.iter().enumerate() {
                target -= p;
                if target <= 0.0 {
                    symbol = s;
                    break;
                }
            }
            if symbol == self.stop_symbol() {
                break;
            }
            tokens.push(symbol);
            prev = symbol;
        }
        tokens
    }

    /// Accumulate `weight * d logprob(state, tokens) / d logits` into
    /// `grad`. For each visited conditional row the gradient of the log
    /// softmax is `onehot(chosen) - softmax(row)`.
    pub fn accumulate_logprob_grad(
        &self,
        state: &str,
        tokens: &[usize],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_tokens(tokens)?;
        debug_assert_eq!(grad.len(), self.logits.len());
        let bucket = state_bucket(state, self.buckets);
        let mut prev = self.stop_symbol();
        for &t in tokens.iter().chain(std::iter::once(&self.stop_symbol())) {
            let offset = self.row_offset(bucket, prev);
            let probs = self.row_probs(bucket, prev);
            for (s, &p) in probs.iter().enumerate() {
                let indicator = if s == t { 1.0 } else { 0.0 };
                grad[offset + s] += weight * (indicator - p);
            }
            prev = t;
        }
        Ok(())
    }

    /// Render tokens as the text form used by judges.
    pub fn trace_text(tokens: &[usize]) -> String {
        tokens
            .iter()
            .map(|t| format!("t{t}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Checkpoint format: magic `MMPO`, version u32, vocab u32, buckets u32,
/// then `buckets * (vocab+1)^2` little-endian f32 parameters.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMPO";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(policy: &TablePolicy) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + policy.param_count() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(policy.vocab as u32).to_le_bytes());
    out.extend_from_slice(&(policy.buckets as u32).to_le_bytes());
    for &p in policy.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TablePolicy> {
    if bytes.len() < 16 {
        return Err(Error::Corruption("checkpoint shorter than header".to_string()));
    }
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::Corruption(format!(
            "checkpoint magic {:?}, expected \"MMPO\"",
            &bytes[0..4]
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Corruption(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let vocab = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let buckets = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let symbols = vocab + 1;
    let expected = 16 + buckets * symbols * symbols * 4;
    if bytes.len() != expected {
        return Err(Error::Corruption(format!(
            "checkpoint payload {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut policy = TablePolicy::uniform(vocab, buckets);
    for (i, chunk) in bytes[16..].chunks_exact(4).enumerate() {
        policy.params_mut()[i] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Ok(policy)
}

pub fn write_checkpoint(path: &std::path::Path, policy: &TablePolicy) -> Result<()> {
    std::fs::write(path, encode_checkpoint(policy)).map_err(|e| Error::io_at(path, e))
}

pub fn read_checkpoint(path: &std::path::Path) -> Result<TablePolicy> {
    let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
    decode_checkpoint(&bytes)
}
