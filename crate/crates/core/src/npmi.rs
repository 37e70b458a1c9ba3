//! Word–class association by normalized pointwise mutual information, and the
//! post relevance scores derived from it.
//!
//! Counts are token occurrences in the posts of each class's profiles. A
//! pseudo-count (default 1) is added to every joint `(word, class)` cell and
//! all marginals are recomputed from the smoothed joints.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, Level, Post, Trait};
use crate::text::TokenizerConfig;

#[derive(Debug, Error)]
pub enum NpmiError {
    #[error("training set is empty")]
    Empty,
    #[error("training set contains only {0} profiles; both classes are required")]
    SingleClass(Level),
    #[error("negative smoothing pseudo-count {0}")]
    InvalidSmoothing(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Whether per-class post scores sum over every token occurrence or over
/// distinct tokens only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Occurrences,
    Distinct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NpmiConfig {
    pub tokenizer: TokenizerConfig,
    /// Pseudo-count added to every joint cell. Zero disables smoothing.
    pub smoothing: f64,
    pub score_mode: ScoreMode,
}

impl Default for NpmiConfig {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            smoothing: 1.0,
            score_mode: ScoreMode::Occurrences,
        }
    }
}

/// NPMI weight of a word for the low and high class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub low: f64,
    pub high: f64,
}

impl ClassWeights {
    pub fn get(&self, level: Level) -> f64 {
        match level {
            Level::Low => self.low,
            Level::High => self.high,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpmiTable {
    pub target: Trait,
    pub config: NpmiConfig,
    /// Prior probability of the low and high class, in that order.
    pub class_priors: [f64; 2],
    pub vocabulary_size: usize,
    pub weights: BTreeMap<String, ClassWeights>,
}

/// Normalized PMI from a joint and its marginals.
///
/// A zero joint gives -1. A joint of 1 (word and class always co-occur and
/// nothing else exists) gives +1. Results are clamped to [-1, 1].
pub fn npmi(p_joint: f64, p_word: f64, p_class: f64) -> f64 {
    if p_joint <= 0.0 {
        return -1.0;
    }
    if p_joint >= 1.0 {
        return 1.0;
    }
    let pmi = (p_joint / (p_word * p_class)).ln();
    (pmi / -p_joint.ln()).clamp(-1.0, 1.0)
}

impl NpmiTable {
    pub fn build(train: &Dataset, config: NpmiConfig) -> Result<Self, NpmiError> {
        if train.is_empty() {
            return Err(NpmiError::Empty);
        }
        if config.smoothing.is_nan() || config.smoothing < 0.0 {
            return Err(NpmiError::InvalidSmoothing(config.smoothing));
        }
        let golds = train.golds();
        for level in Level::BOTH {
            if !golds.contains(&level) {
                return Err(NpmiError::SingleClass(level.opposite()));
            }
        }

        let mut counts: BTreeMap<String, [f64; 2]> = BTreeMap::new();
        for (profile, gold) in train.profiles.iter().zip(&golds) {
            for post in &profile.posts {
                for tok in config.tokenizer.tokenize(&post.text) {
                    counts.entry(tok).or_insert([0.0; 2])[gold.index()] += 1.0;
                }
            }
        }
        for cell in counts.values_mut() {
            cell[0] += config.smoothing;
            cell[1] += config.smoothing;
        }

        let mut class_totals = [0.0; 2];
        for cell in counts.values() {
            class_totals[0] += cell[0];
            class_totals[1] += cell[1];
        }
        let total = class_totals[0] + class_totals[1];
        let class_priors = if total > 0.0 {
            [class_totals[0] / total, class_totals[1] / total]
        } else {
            [0.5, 0.5]
        };

        let weights = counts
            .into_iter()
            .map(|(word, cell)| {
                let p_word = (cell[0] + cell[1]) / total;
                let w = ClassWeights {
                    low: npmi(cell[0] / total, p_word, class_priors[0]),
                    high: npmi(cell[1] / total, p_word, class_priors[1]),
                };
                (word, w)
            })
            .collect::<BTreeMap<_, _>>();

        Ok(Self {
            target: train.target,
            vocabulary_size: weights.len(),
            config,
            class_priors,
            weights,
        })
    }

    pub fn weight(&self, word: &str, level: Level) -> f64 {
        self.weights.get(word).map_or(0.0, |w| w.get(level))
    }

    fn tokens(&self, text: &str) -> Vec<String> {
        self.config.tokenizer.tokenize(text)
    }

    /// Sum of a post's token weights for one class. Unknown tokens contribute 0.
    pub fn class_score(&self, post: &Post, level: Level) -> f64 {
        let tokens = self.tokens(&post.text);
        match self.config.score_mode {
            ScoreMode::Occurrences => tokens.iter().map(|t| self.weight(t, level)).sum(),
            ScoreMode::Distinct => tokens
                .iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .map(|t| self.weight(t, level))
                .sum(),
        }
    }

    /// Absolute difference of the two class scores divided by the number of
    /// distinct tokens in the post; 0 for a post without tokens.
    pub fn r_score(&self, post: &Post) -> f64 {
        let tokens = self.tokens(&post.text);
        let distinct = tokens.iter().collect::<BTreeSet<_>>().len();
        if distinct == 0 {
            return 0.0;
        }
        let diff = self.class_score(post, Level::High) - self.class_score(post, Level::Low);
        diff.abs() / distinct as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NpmiError> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NpmiError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceAnnotation {
    pub profile_id: String,
    pub post_index: usize,
    pub relevant: bool,
    pub r_score: f64,
}

/// Indices of `scores` ordered by descending score, ties by ascending index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Marks the `m` highest r-scored posts of every profile as relevant.
pub fn annotate_top_m(dataset: &Dataset, table: &NpmiTable, m: usize) -> Vec<RelevanceAnnotation> {
    let mut out = Vec::with_capacity(dataset.num_posts());
    for profile in &dataset.profiles {
        let scores: Vec<f64> = profile.posts.iter().map(|p| table.r_score(p)).collect();
        let mut relevant = vec![false; scores.len()];
        for &i in rank_descending(&scores).iter().take(m) {
            relevant[i] = true;
        }
        out.extend(profile.posts.iter().enumerate().map(|(i, post)| RelevanceAnnotation {
            profile_id: profile.id.clone(),
            post_index: post.index,
            relevant: relevant[i],
            r_score: scores[i],
        }));
    }
    out
}
