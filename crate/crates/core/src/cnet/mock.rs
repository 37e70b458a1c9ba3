//! Deterministic stand-in for a chat model.
//!
//! Classification prompts are answered by counting marker tokens in the
//! rendered post lines: more high markers than low markers answers "high",
//! anything else answers "low". Generation prompts are answered with a
//! numbered list of canned posts carrying the marker of the requested level.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::client::{CompletionBackend, SamplingParams};
use super::prompt::Prompt;
use super::LlmError;
use crate::corpus::Level;

pub const DEFAULT_HIGH_MARKER: &str = "hi-marker";
pub const DEFAULT_LOW_MARKER: &str = "lo-marker";

const QUESTION_CUE: &str = "low or high level of";
const GENERATION_CUE: &str = "tweets that are likely written by a person with a ";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockMarkers {
    pub high: String,
    pub low: String,
}

impl Default for MockMarkers {
    fn default() -> Self {
        Self {
            high: DEFAULT_HIGH_MARKER.to_string(),
            low: DEFAULT_LOW_MARKER.to_string(),
        }
    }
}

impl MockMarkers {
    /// Parses the part after `mock:`, e.g. `markers=hi-marker,lo-marker`.
    /// An empty string selects the default markers.
    pub fn parse(spec: &str) -> Result<Self, LlmError> {
        let spec = spec.trim();
        if spec.is_empty() {
            return Ok(Self::default());
        }
        let list = spec
            .strip_prefix("markers=")
            .ok_or_else(|| LlmError::Config(format!("unrecognized mock option `{spec}`")))?;
        match list.split(',').map(str::trim).collect::<Vec<_>>()[..] {
            [hi, lo] if !hi.is_empty() && !lo.is_empty() && hi != lo => Ok(Self {
                high: hi.to_string(),
                low: lo.to_string(),
            }),
            _ => Err(LlmError::Config(format!(
                "mock markers must be two distinct tokens, got `{list}`"
            ))),
        }
    }

    pub fn marker(&self, level: Level) -> &str {
        match level {
            Level::High => &self.high,
            Level::Low => &self.low,
        }
    }

    fn count(&self, line: &str) -> (usize, usize) {
        let mut hi = 0;
        let mut lo = 0;
        for tok in line.split_whitespace() {
            let tok = tok.trim_matches(|c: char| c.is_ascii_punctuation() && c != '-');
            if tok.eq_ignore_ascii_case(&self.high) {
                hi += 1;
            } else if tok.eq_ignore_ascii_case(&self.low) {
                lo += 1;
            }
        }
        (hi, lo)
    }
}

/// Majority vote of marker tokens over the post lines of a classification
/// prompt (raw framing or user message). Ties, including zero markers, are low.
pub fn mock_classify(prompt: &str, markers: &MockMarkers) -> Result<Level, LlmError> {
    if !prompt.contains(QUESTION_CUE) {
        return Err(LlmError::UnrecognizedPrompt);
    }
    let mut post_lines = 0;
    let (mut hi, mut lo) = (0, 0);
    for line in prompt.lines().filter(|l| l.starts_with("- ")) {
        post_lines += 1;
        let (h, l) = markers.count(&line[2..]);
        hi += h;
        lo += l;
    }
    if post_lines == 0 {
        return Err(LlmError::UnrecognizedPrompt);
    }
    Ok(if hi > lo { Level::High } else { Level::Low })
}

fn parse_generation_request(prompt: &str) -> Option<(Level, String, usize)> {
    let start = prompt.find(GENERATION_CUE)? + GENERATION_CUE.len();
    let rest = &prompt[start..];
    let level = if rest.starts_with("high") {
        Level::High
    } else if rest.starts_with("low") {
        Level::Low
    } else {
        return None;
    };
    let topic = prompt
        .split("Try to include the topic ")
        .nth(1)
        .map(|t| t.trim().trim_end_matches('.').to_string())
        .unwrap_or_default();
    let count = prompt
        .split("Generate ")
        .nth(1)
        .and_then(|t| t.split_whitespace().next())
        .and_then(super::super::augmentation::parse_count_word)
        .unwrap_or(10);
    Some((level, topic, count))
}

/// Canned, deterministic response to a generation prompt.
pub fn mock_generate(prompt: &str, markers: &MockMarkers) -> Result<String, LlmError> {
    let (level, topic, count) =
        parse_generation_request(prompt).ok_or(LlmError::UnrecognizedPrompt)?;
    let marker = markers.marker(level);
    let topic = if topic.is_empty() { "life".to_string() } else { topic };
    Ok((1..=count)
        .map(|i| format!("{i}. {marker} thinking about {topic} again, note {i}"))
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Backend answering every request locally with [`mock_classify`] or
/// [`mock_generate`]. Counts requests.
#[derive(Debug, Default)]
pub struct MockBackend {
    pub markers: MockMarkers,
    requests: AtomicUsize,
}

impl MockBackend {
    pub fn new(markers: MockMarkers) -> Self {
        Self {
            markers,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, prompt: &Prompt, _params: &SamplingParams) -> Result<String, LlmError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        if prompt.user.contains(GENERATION_CUE) {
            return mock_generate(&prompt.user, &self.markers);
        }
        mock_classify(&prompt.user, &self.markers).map(|l| l.name().to_string())
    }
}
