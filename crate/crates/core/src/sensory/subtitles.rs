//! Subtitle track: line-oriented `start_ms<TAB>end_ms<TAB>text`, UTF-8.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SubtitleLine {
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubtitleTrack {
    pub lines: Vec<SubtitleLine>,
}

impl SubtitleTrack {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut lines = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let mut parts = raw.splitn(3, '\t');
            let (start, end, body) = match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(e), Some(t)) => (s, e, t),
                _ => {
                    return Err(Error::Parse(format!(
                        "subtitle line {}: expected start<TAB>end<TAB>text",
                        lineno + 1
                    )))
                }
            };
            let start_ms = start.trim().parse::<u64>().map_err(|e| {
                Error::Parse(format!("subtitle line {}: bad start: {e}", lineno + 1))
            })?;
            let end_ms = end.trim().parse::<u64>().map_err(|e| {
                Error::Parse(format!("subtitle line {}: bad end: {e}", lineno + 1))
            })?;
            if end_ms < start_ms {
                return Err(Error::Parse(format!(
                    "subtitle line {}: end before start",
                    lineno + 1
                )));
            }
            lines.push(SubtitleLine {
                start_ms,
                end_ms,
                text: body.to_string(),
            });
        }
        Ok(Self { lines })
    }

    /// Space-joined text of every line overlapping `[start_ms, end_ms]`,
    /// in file order. `None` when nothing overlaps.
    pub fn text_overlapping(&self, start_ms: u64, end_ms: u64) -> Option<String> {
        let hits: Vec<&str> = self
            .lines
            .iter()
            .filter(|l| l.start_ms <= end_ms && l.end_ms >= start_ms)
            .map(|l| l.text.as_str())
            .collect();
        if hits.is_empty() {
            None
        } else {
            Some(hits.join(" "))
        }
    }
}
