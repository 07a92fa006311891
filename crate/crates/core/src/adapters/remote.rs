//! Remote adapter for chat-completions-style inference servers.
//!
//! Requests are plain HTTP POSTs with a `(model, messages, temperature)`
//! body and the reply is read from the first choice's message content, so
//! any common open inference server works. Transport failures retry with
//! exponential backoff; malformed bodies are protocol errors carrying the
//! raw body and never retried. Responses are parsed per capability but
//! never normalized or rescored.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use crate::adapters::{
    AdapterInfo, CandidateScorer, Capability, Captioner, EntityExtractor, TraceJudge,
    VisualPayload,
};
use crate::error::{Error, Result};

pub const ENV_BASE_URL: &str = "MMMEM_BASE_URL";
pub const ENV_API_KEY: &str = "MMMEM_API_KEY";
pub const ENV_MODEL: &str = "MMMEM_MODEL";

/// How multiple-choice answers come back from the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// One number per candidate, whitespace/comma separated.
    Scores,
    /// A single letter (`A`..) selecting a candidate; converted to scores.
    Letter,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub temperature: f64,
    pub score_mode: ScoreMode,
    /// Maximum concurrent in-flight requests.
    pub max_in_flight: usize,
    pub caption_prompt: String,
    pub extract_prompt: String,
    pub score_prompt: String,
    pub judge_prompt: String,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout_ms: 30_000,
            max_retries: 3,
            temperature: 0.0,
            score_mode: ScoreMode::Scores,
            max_in_flight: 4,
            caption_prompt: "Describe the clip window {{window}} of clip {{clip}} in one short sentence.".to_string(),
            extract_prompt: "List the entities and relations in the text below, one record per line: ENTITY<TAB>surface<TAB>gloss or REL<TAB>subject<TAB>label<TAB>object.\n\n{{text}}".to_string(),
            score_prompt: "Question: {{question}}\n\nEvidence:\n{{evidence}}\n\nCandidates:\n{{candidates}}\n\nReply with one relevance score per candidate, separated by spaces.".to_string(),
            judge_prompt: "State:\n{{state}}\n\nTrace:\n{{trace}}\n\nReply with a single score in [0, 1] for whether the trace answers the state's task.".to_string(),
        }
    }

    /// Build from `MMMEM_BASE_URL`, `MMMEM_API_KEY` and `MMMEM_MODEL`.
    pub fn from_env() -> Result<Self> {
        let base_url = std::env::var(ENV_BASE_URL)
            .map_err(|_| Error::Config(format!("{ENV_BASE_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL)
            .map_err(|_| Error::Config(format!("{ENV_MODEL} is not set")))?;
        let mut cfg = Self::new(base_url, model);
        cfg.api_key = std::env::var(ENV_API_KEY).ok();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be > 0".to_string()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be > 0".to_string()));
        }
        Ok(())
    }
}

/// Counting gate bounding concurrent requests.
struct InFlightGate {
    state: Mutex<usize>,
    cv: Condvar,
    cap: usize,
}

impl InFlightGate {
    fn new(cap: usize) -> Self {
        Self {
            state: Mutex::new(0),
            cv: Condvar::new(),
            cap,
        }
    }

    fn acquire(&self) {
        let mut n = self.state.lock().unwrap();
        while *n >= self.cap {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
    }

    fn release(&self) {
        let mut n = self.state.lock().unwrap();
        *n -= 1;
        self.cv.notify_one();
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

pub struct RemoteClient {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    gate: InFlightGate,
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Transport(format!("client setup: {e}")))?;
        let gate = InFlightGate::new(config.max_in_flight);
        Ok(Self { config, http, gate })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    /// One chat completion round trip with retries. Returns the first
    /// choice's message content verbatim.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.temperature,
        };
        self.gate.acquire();
        let result = self.complete_with_retries(&body);
        self.gate.release();
        result
    }

    fn complete_with_retries(&self, body: &ChatRequest<'_>) -> Result<String> {
        let mut attempt = 0u32;
        loop {
            match self.try_once(body) {
                Ok(text) => return Ok(text),
                Err(Error::Transport(e)) => {
                    if attempt >= self.config.max_retries {
                        return Err(Error::Transport(format!(
                            "retries exhausted after {} attempts: {e}",
                            attempt + 1
                        )));
                    }
                    let backoff = 50u64.saturating_mul(1 << attempt.min(5));
                    std::thread::sleep(Duration::from_millis(backoff.min(2_000)));
                    attempt += 1;
                }
                Err(other) => return Err(other),
            }
        }
    }

    fn try_once(&self, body: &ChatRequest<'_>) -> Result<String> {
        let mut req = self.http.post(self.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Error::Transport(format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| Error::Transport(format!("body read failed: {e}")))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::Transport(format!("server status {status}")));
        }
        if !status.is_success() {
            return Err(Error::Protocol {
                detail: format!("unexpected status {status}"),
                body: text,
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Protocol {
            detail: format!("invalid JSON: {e}"),
            body: text.clone(),
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or(Error::Protocol {
                detail: "missing choices[0].message.content".to_string(),
                body: text,
            })
    }
}

fn render(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, val) in pairs {
        out = out.replace(&format!("{{{{{key}}}}}"), val);
    }
    out
}

/// Parse exactly `n` numbers out of a reply, tolerating commas and
/// newlines as separators.
pub fn parse_scores(body: &str, n: usize) -> Result<Vec<f64>> {
    let nums: Vec<f64> = body
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Protocol {
            detail: format!("expected {n} numbers: {e}"),
            body: body.to_string(),
        })?;
    if nums.len() != n {
        return Err(Error::Protocol {
            detail: format!("expected {n} scores, got {}", nums.len()),
            body: body.to_string(),
        });
    }
    if nums.iter().any(|x| !x.is_finite()) {
        return Err(Error::Protocol {
            detail: "non-finite score".to_string(),
            body: body.to_string(),
        });
    }
    Ok(nums)
}

/// Extract a multiple-choice selection from free text: the first
/// standalone letter within `A..` range for `n` candidates wins.
/// Unparseable replies are protocol errors, never a guess.
pub fn extract_choice_letter(body: &str, n: usize) -> Result<usize> {
    debug_assert!(n >= 1 && n <= 26);
    let last = (b'A' + (n as u8 - 1)) as char;
    let chars: Vec<char> = body.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let upper = c.to_ascii_uppercase();
        if !upper.is_ascii_uppercase() || upper > last {
            continue;
        }
        let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let next_ok = i + 1 >= chars.len() || !chars[i + 1].is_alphanumeric();
        if prev_ok && next_ok {
            return Ok((upper as u8 - b'A') as usize);
        }
    }
    Err(Error::Protocol {
        detail: format!("no standalone answer letter in A..{last}"),
        body: body.to_string(),
    })
}

impl Captioner for RemoteClient {
    fn caption(
        &self,
        clip_id: u64,
        window: (usize, usize),
        _payload: &VisualPayload,
    ) -> Result<String> {
        let prompt = render(
            &self.config.caption_prompt,
            &[
                ("clip", &clip_id.to_string()),
                ("window", &format!("{}..{}", window.0, window.1)),
            ],
        );
        self.complete(&prompt)
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::Caption],
            dimension: None,
            deterministic: false,
        }
    }
}

impl EntityExtractor for RemoteClient {
    fn extract(&self, _node_id: usize, text: &str) -> Result<String> {
        self.complete(&render(&self.config.extract_prompt, &[("text", text)]))
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::ExtractEntities],
            dimension: None,
            deterministic: false,
        }
    }
}

impl CandidateScorer for RemoteClient {
    fn score(
        &self,
        question: &str,
        evidence: &[String],
        candidates: &[String],
    ) -> Result<Vec<f64>> {
        let lettered: Vec<String> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {c}", (b'A' + i as u8) as char))
            .collect();
        let prompt = render(
            &self.config.score_prompt,
            &[
                ("question", question),
                ("evidence", &evidence.join("\n")),
                ("candidates", &lettered.join("\n")),
            ],
        );
        let body = self.complete(&prompt)?;
        match self.config.score_mode {
            ScoreMode::Scores => parse_scores(&body, candidates.len()),
            ScoreMode::Letter => {
                let idx = extract_choice_letter(&body, candidates.len())?;
                // A picked letter maps to a sharply peaked score vector.
                Ok((0..candidates.len())
                    .map(|i| if i == idx { 6.0 } else { 0.0 })
                    .collect())
            }
        }
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::ScoreCandidates],
            dimension: None,
            deterministic: false,
        }
    }
}

impl TraceJudge for RemoteClient {
    fn judge(&self, state: &str, trace: &str) -> Result<f64> {
        let prompt = render(
            &self.config.judge_prompt,
            &[("state", state), ("trace", trace)],
        );
        let body = self.complete(&prompt)?;
        Ok(parse_scores(&body, 1)?[0])
    }

    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            capabilities: vec![Capability::Judge],
            dimension: None,
            deterministic: false,
        }
    }
}
