//! Supervised reference systems: a character n-gram tf-idf ridge classifier
//! over whole profiles, and a post-level classifier with a majority vote.

mod post_level;
mod ridge;
mod tfidf;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use post_level::{majority_vote, train_post_level, PostLevelConfig, PostLevelModel};
pub use ridge::{normal_equation_residual, train_ridge, RidgeConfig, RidgeModel};
pub use tfidf::{char_ngrams, fit_tfidf, SparseRow, TfidfConfig, TfidfModel};

use crate::corpus::{Dataset, Level, Profile};
use crate::evaluation::ProfileOutcome;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("training data needs both classes")]
    SingleClass,
    #[error("ridge system is singular; increase alpha")]
    Singular,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} rows but {1} labels")]
    ShapeMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn require_both_classes(levels: impl IntoIterator<Item = Level>) -> Result<(), BaselineError> {
    let mut seen = [false; 2];
    for l in levels {
        seen[l.index()] = true;
    }
    if seen == [true, true] {
        Ok(())
    } else {
        Err(BaselineError::SingleClass)
    }
}

/// Profile-level ridge classifier over tf-idf rows of concatenated posts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeBaseline {
    pub tfidf: TfidfModel,
    pub ridge: RidgeModel,
}

impl RidgeBaseline {
    pub fn fit(train: &Dataset, tfidf: &TfidfConfig, ridge: &RidgeConfig) -> Result<Self, BaselineError> {
        require_both_classes(train.golds())?;
        let model = fit_tfidf(&train.profiles, tfidf)?;
        let rows: Vec<SparseRow> = train.profiles.iter().map(|p| model.transform(p)).collect();
        let labels: Vec<f64> = train.golds().into_iter().map(level_sign).collect();
        let ridge = train_ridge(&rows, model.num_columns(), &labels, ridge)?;
        Ok(Self { tfidf: model, ridge })
    }

    pub fn predict(&self, profile: &Profile) -> Level {
        self.ridge.predict(&self.tfidf.transform(profile))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BaselineError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BaselineError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// `+1` for high, `-1` for low.
pub fn level_sign(level: Level) -> f64 {
    match level {
        Level::High => 1.0,
        Level::Low => -1.0,
    }
}

/// Scores a baseline on `dataset` in the same shape as selector outcomes.
pub fn baseline_outcomes(dataset: &Dataset, mut predict: impl FnMut(&Profile) -> Level) -> Vec<ProfileOutcome> {
    dataset
        .profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let start = std::time::Instant::now();
            let predicted = predict(p);
            ProfileOutcome {
                profile_id: p.id.clone(),
                predicted,
                gold: dataset.gold(i),
                parse_ok: true,
                seconds: start.elapsed().as_secs_f64(),
                prompt_chars: None,
            }
        })
        .collect()
}
