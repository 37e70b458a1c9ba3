//! The five post-selection strategies behind one interface, and profile-level
//! prediction through the classifier.

use std::fmt;
use std::hash::Hasher;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnet::{Cnet, LevelPrediction, LlmError};
use crate::corpus::{Dataset, Post, Profile};
use crate::evaluation::ProfileOutcome;
use crate::npmi::{rank_descending, NpmiTable};
use crate::policy::{rank_top_n, LinearPolicy};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("strategy {0} requires {1}")]
    MissingResource(Strategy, &'static str),
    #[error("profile `{0}` has no posts")]
    EmptyProfile(String),
    #[error("top-N must be at least 1")]
    InvalidTopN,
    #[error("unknown strategy `{0}` (expected ALL, RND, PMI, PT or RL)")]
    UnknownStrategy(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    /// Every post.
    All,
    /// `N` posts drawn uniformly without replacement.
    Rnd,
    /// Top-`N` posts by NPMI relevance score.
    Pmi,
    /// Top-`N` under the policy after relevance pre-training only.
    Pt,
    /// Top-`N` under the reinforcement-trained policy.
    Rl,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::All, Strategy::Rnd, Strategy::Pmi, Strategy::Pt, Strategy::Rl];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::All => "ALL",
            Strategy::Rnd => "RND",
            Strategy::Pmi => "PMI",
            Strategy::Pt => "PT",
            Strategy::Rl => "RL",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = SelectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SelectError::UnknownStrategy(s.to_string()))
    }
}

/// A strategy with its top-N and the resource it ranks with.
#[derive(Clone, Debug)]
pub struct SelectorConfig {
    pub strategy: Strategy,
    /// Ignored by ALL.
    pub top_n: usize,
    /// Seeds RND.
    pub seed: u64,
    pub policy: Option<Arc<LinearPolicy>>,
    pub npmi: Option<Arc<NpmiTable>>,
}

impl SelectorConfig {
    pub fn all() -> Self {
        Self {
            strategy: Strategy::All,
            top_n: usize::MAX,
            seed: 0,
            policy: None,
            npmi: None,
        }
    }

    pub fn rnd(top_n: usize, seed: u64) -> Self {
        Self {
            strategy: Strategy::Rnd,
            top_n,
            seed,
            ..Self::all()
        }
    }

    pub fn pmi(top_n: usize, table: Arc<NpmiTable>) -> Self {
        Self {
            strategy: Strategy::Pmi,
            top_n,
            npmi: Some(table),
            ..Self::all()
        }
    }

    /// PT or RL; both rank by a policy checkpoint.
    pub fn policy(strategy: Strategy, top_n: usize, policy: Arc<LinearPolicy>) -> Self {
        Self {
            strategy,
            top_n,
            policy: Some(policy),
            ..Self::all()
        }
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        if self.strategy != Strategy::All && self.top_n == 0 {
            return Err(SelectError::InvalidTopN);
        }
        match self.strategy {
            Strategy::Pmi if self.npmi.is_none() => Err(SelectError::MissingResource(self.strategy, "an NPMI table")),
            Strategy::Pt | Strategy::Rl if self.policy.is_none() => {
                Err(SelectError::MissingResource(self.strategy, "a policy checkpoint"))
            }
            _ => Ok(()),
        }
    }

    /// Top-N reported for this selector; `None` for ALL.
    pub fn reported_top_n(&self) -> Option<usize> {
        (self.strategy != Strategy::All).then_some(self.top_n)
    }
}

fn profile_seed(seed: u64, profile_id: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(profile_id.as_bytes());
    seed ^ h.finish()
}

/// Selected post positions in rank order (ALL and RND: sample order).
pub fn select(cfg: &SelectorConfig, profile: &Profile) -> Result<Vec<usize>, SelectError> {
    cfg.validate()?;
    let len = profile.posts.len();
    if len == 0 {
        return Err(SelectError::EmptyProfile(profile.id.clone()));
    }
    let n = cfg.top_n.min(len);
    Ok(match cfg.strategy {
        Strategy::All => (0..len).collect(),
        Strategy::Rnd => {
            let mut rng = ChaCha8Rng::seed_from_u64(profile_seed(cfg.seed, &profile.id));
            rand::seq::index::sample(&mut rng, len, n).into_vec()
        }
        Strategy::Pmi => {
            let table = cfg.npmi.as_ref().expect("validated");
            let scores: Vec<f64> = profile.posts.iter().map(|p| table.r_score(p)).collect();
            let mut order = rank_descending(&scores);
            order.truncate(n);
            order
        }
        Strategy::Pt | Strategy::Rl => rank_top_n(cfg.policy.as_deref().expect("validated"), profile, n),
    })
}

/// The selected posts in their original profile order.
pub fn selected_posts<'a>(profile: &'a Profile, indices: &[usize]) -> Vec<&'a Post> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.into_iter().map(|i| &profile.posts[i]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfilePrediction {
    pub prediction: LevelPrediction,
    pub selected: Vec<usize>,
    pub prompt_chars: usize,
    /// Selection plus classification wall-clock time.
    pub seconds: f64,
}

/// Selects, renders and classifies one profile.
pub fn predict_profile(cfg: &SelectorConfig, profile: &Profile, cnet: &Cnet) -> Result<ProfilePrediction, SelectError> {
    let start = Instant::now();
    let selected = select(cfg, profile)?;
    let prompt = cnet.prompt(&selected_posts(profile, &selected))?;
    let prediction = cnet.client.classify(&prompt)?;
    Ok(ProfilePrediction {
        prediction,
        selected,
        prompt_chars: prompt.char_len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Predicts every profile of `dataset`, keeping at most the endpoint's
/// parallelism in flight. Outcomes follow dataset order.
pub fn predict_dataset(cfg: &SelectorConfig, dataset: &Dataset, cnet: &Cnet) -> Result<Vec<ProfileOutcome>, SelectError> {
    cfg.validate()?;
    let n = dataset.len();
    let workers = cnet.client.endpoint.parallelism.max(1).min(n.max(1));
    let one = |i: usize| -> Result<ProfileOutcome, SelectError> {
        let profile = &dataset.profiles[i];
        let p = predict_profile(cfg, profile, cnet)?;
        Ok(ProfileOutcome {
            profile_id: profile.id.clone(),
            predicted: p.prediction.level,
            gold: dataset.gold(i),
            parse_ok: p.prediction.parse_ok,
            seconds: p.seconds,
            prompt_chars: Some(p.prompt_chars),
        })
    };
    if workers <= 1 {
        return (0..n).map(one).collect();
    }
    let mut slots: Vec<Option<Result<ProfileOutcome, SelectError>>> = (0..n).map(|_| None).collect();
    thread::scope(|s| {
        let one = &one;
        let handles: Vec<_> = (0..workers)
            .map(|w| s.spawn(move || (w..n).step_by(workers).map(|i| (i, one(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("prediction worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every profile is assigned")).collect()
}

/// One line of a selection audit file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub profile_id: String,
    pub strategy: Strategy,
    pub top_n: Option<usize>,
    /// Post positions in rank order.
    pub indices: Vec<usize>,
}

pub fn selection_records(cfg: &SelectorConfig, dataset: &Dataset) -> Result<Vec<SelectionRecord>, SelectError> {
    dataset
        .profiles
        .iter()
        .map(|p| {
            Ok(SelectionRecord {
                profile_id: p.id.clone(),
                strategy: cfg.strategy,
                top_n: cfg.reported_top_n(),
                indices: select(cfg, p)?,
            })
        })
        .collect()
}

pub fn write_selection_records<W: Write>(mut out: W, records: &[SelectionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
