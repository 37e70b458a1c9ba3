//! Word tokenization shared by the relevance scorer and the policy featurizer.

use serde::{Deserialize, Serialize};

/// How raw post text is turned into word tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Strip punctuation from both ends of every whitespace-delimited token.
    pub strip_punctuation: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2026}' | '\u{00AB}' | '\u{00BB}'
                | '\u{00BF}' | '\u{00A1}' | '\u{2013}' | '\u{2014}'
        )
}

impl TokenizerConfig {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .filter_map(|raw| {
                let tok = if self.strip_punctuation {
                    raw.trim_matches(is_punct)
                } else {
                    raw
                };
                if tok.is_empty() {
                    None
                } else if self.lowercase {
                    Some(tok.to_lowercase())
                } else {
                    Some(tok.to_string())
                }
            })
            .collect()
    }
}
