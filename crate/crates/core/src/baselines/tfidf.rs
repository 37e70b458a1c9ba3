use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::corpus::Profile;

/// Sparse row, entries sorted by column.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfidfConfig {
    pub min_n: usize,
    pub max_n: usize,
    pub lowercase: bool,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self {
            min_n: 2,
            max_n: 4,
            lowercase: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub config: TfidfConfig,
    /// N-gram to column, columns numbered in lexicographic n-gram order.
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub documents: usize,
}

/// Every character n-gram of `text` with order in `min_n..=max_n`, in order
/// of occurrence.
pub fn char_ngrams(text: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for n in min_n.max(1)..=max_n {
        out.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
    }
    out
}

/// All posts of a profile joined by newlines.
fn document(profile: &Profile, lowercase: bool) -> String {
    let joined = profile.posts.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n");
    if lowercase {
        joined.to_lowercase()
    } else {
        joined
    }
}

/// Learns the vocabulary and `idf = ln((1 + n) / (1 + df)) + 1`.
pub fn fit_tfidf(profiles: &[Profile], config: &TfidfConfig) -> Result<TfidfModel, BaselineError> {
    if profiles.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    if config.min_n == 0 || config.min_n > config.max_n {
        return Err(BaselineError::Config(format!(
            "n-gram range {}..={} is empty",
            config.min_n, config.max_n
        )));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for p in profiles {
        let grams: BTreeSet<String> = char_ngrams(&document(p, config.lowercase), config.min_n, config.max_n)
            .into_iter()
            .collect();
        for g in grams {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let n = profiles.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    for (col, (gram, d)) in df.into_iter().enumerate() {
        idf.push(((1.0 + n) / (1.0 + d as f64)).ln() + 1.0);
        vocabulary.insert(gram, col);
    }
    Ok(TfidfModel {
        config: config.clone(),
        vocabulary,
        idf,
        documents: profiles.len(),
    })
}

impl TfidfModel {
    pub fn num_columns(&self) -> usize {
        self.idf.len()
    }

    /// Raw counts times idf, L2-normalized. Unknown n-grams are dropped.
    pub fn transform_text(&self, text: &str) -> SparseRow {
        let text = if self.config.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for g in char_ngrams(&text, self.config.min_n, self.config.max_n) {
            if let Some(&col) = self.vocabulary.get(&g) {
                *counts.entry(col).or_insert(0.0) += 1.0;
            }
        }
        let mut row: SparseRow = counts.into_iter().map(|(c, tf)| (c, tf * self.idf[c])).collect();
        row.sort_unstable_by_key(|&(c, _)| c);
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut row {
                e.1 /= norm;
            }
        }
        row
    }

    pub fn transform(&self, profile: &Profile) -> SparseRow {
        self.transform_text(&document(profile, false))
    }
}
