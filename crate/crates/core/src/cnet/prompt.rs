//! Classification prompts and response parsing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::corpus::{Level, Post, Trait};

const DEFAULT_ITEMS: &str = include_str!("../../data/trait_items.json");

/// Questionnaire items describing high and (reverse-scored) low levels of a trait.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitContext {
    pub target: Trait,
    pub high_items: Vec<String>,
    pub low_items: Vec<String>,
}

#[derive(Deserialize)]
struct ItemLists {
    high: Vec<String>,
    low: Vec<String>,
}

fn contexts_from_json(text: &str) -> Result<BTreeMap<Trait, TraitContext>, LlmError> {
    let raw: BTreeMap<Trait, ItemLists> =
        serde_json::from_str(text).map_err(|e| LlmError::Config(e.to_string()))?;
    raw.into_iter()
        .map(|(target, lists)| {
            let ctx = TraitContext {
                target,
                high_items: lists.high,
                low_items: lists.low,
            };
            ctx.validate()?;
            Ok((target, ctx))
        })
        .collect()
}

impl TraitContext {
    /// The bundled example items for `target`.
    pub fn default_for(target: Trait) -> Self {
        contexts_from_json(DEFAULT_ITEMS)
            .expect("bundled trait items are valid")
            .remove(&target)
            .expect("bundled trait items cover every trait")
    }

    /// Loads item lists from a JSON file shaped like
    /// `{"extraversion": {"high": [...], "low": [...]}, ...}`.
    pub fn load_all(path: impl AsRef<Path>) -> Result<BTreeMap<Trait, TraitContext>, LlmError> {
        let mut text = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut text)?;
        contexts_from_json(&text)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.high_items.is_empty() || self.low_items.is_empty() {
            return Err(LlmError::Config(format!(
                "trait context for {} needs at least one high and one low item",
                self.target
            )));
        }
        Ok(())
    }

    pub fn items(&self, level: Level) -> &[String] {
        match level {
            Level::High => &self.high_items,
            Level::Low => &self.low_items,
        }
    }

    /// Items joined as "is talkative, or is full of energy".
    pub fn item_phrase(&self, level: Level) -> String {
        self.items(level).join(", or ")
    }
}

/// A rendered prompt: system instruction plus user message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// Single-string instruction framing for models served without a chat template.
    pub fn to_raw(&self) -> String {
        format!(
            "<s>[INST] <<SYS>>\n{}\n<</SYS>>\n\n{} [/INST]",
            self.system, self.user
        )
    }

    pub fn char_len(&self) -> usize {
        self.to_raw().chars().count()
    }
}

pub const DEFAULT_SYSTEM_TEXT: &str = "one word response";

pub const DEFAULT_TEMPLATE: &str = "Recall the personality trait {trait}.\n\
A person with a high level of {trait} may see themselves as someone who {high_items}.\n\
A person with a low level of {trait} may see themselves as someone who {low_items}.\n\
\n\
Consider the following tweets written by the same person:\n\
{posts}\n\
Does this person show a low or high level of {trait}? Do not give an explanation.";

/// Prompt wording. The template understands `{trait}`, `{high_items}`,
/// `{low_items}` and `{posts}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSpec {
    pub system_text: String,
    pub template: String,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            system_text: DEFAULT_SYSTEM_TEXT.to_string(),
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

/// One post as a prompt line: `- ` followed by the text with line breaks
/// written as a literal `\n`.
pub fn render_post_line(text: &str) -> String {
    let escaped = text.replace("\r\n", "\\n").replace(['\n', '\r'], "\\n");
    format!("- {escaped}")
}

pub fn build_prompt(spec: &PromptSpec, ctx: &TraitContext, posts: &[&Post]) -> Result<Prompt, LlmError> {
    if posts.is_empty() {
        return Err(LlmError::EmptyPrompt);
    }
    let lines: Vec<String> = posts.iter().map(|p| render_post_line(&p.text)).collect();
    // `{posts}` is substituted last so post text is never re-interpreted.
    let user = spec
        .template
        .replace("{trait}", ctx.target.name())
        .replace("{high_items}", &ctx.item_phrase(Level::High))
        .replace("{low_items}", &ctx.item_phrase(Level::Low))
        .replace("{posts}", &lines.join("\n"));
    Ok(Prompt {
        system: spec.system_text.clone(),
        user,
    })
}

/// Reads a level out of a model answer: exactly one of the words "low" and
/// "high" must occur (case-insensitive).
pub fn parse_level(response: &str) -> Option<Level> {
    let mut low = false;
    let mut high = false;
    for word in response.split(|c: char| !c.is_alphanumeric()) {
        if word.eq_ignore_ascii_case("low") {
            low = true;
        } else if word.eq_ignore_ascii_case("high") {
            high = true;
        }
    }
    match (low, high) {
        (true, false) => Some(Level::Low),
        (false, true) => Some(Level::High),
        _ => None,
    }
}
