//! The stochastic post-selection policy.
//!
//! A policy maps a post to the probability of selecting it. [`SelectionPolicy`]
//! is the interface the trainer and selectors work against; [`LinearPolicy`]
//! is the shipped implementation: a logistic model over hashed word unigram
//! and bigram counts.

use std::collections::HashMap;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, Post, Profile};
use crate::npmi::{rank_descending, RelevanceAnnotation};
use crate::optim::Optimizer;
use crate::text::TokenizerConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy parameters are not finite")]
    NonFinite,
    #[error("no relevance annotations given")]
    NoAnnotations,
    #[error("post {post_index} of profile `{profile_id}` has no relevance annotation")]
    MissingAnnotation { profile_id: String, post_index: usize },
    #[error("checkpoint format version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error("checkpoint parameters have length {found}, featurizer expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    /// Number of hash buckets.
    pub dims: usize,
    /// Highest word n-gram order (1 = unigrams, 2 = unigrams and bigrams).
    pub max_ngram: usize,
    pub tokenizer: TokenizerConfig,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            dims: 1 << 18,
            max_ngram: 2,
            tokenizer: TokenizerConfig::default(),
        }
    }
}

/// Sparse feature vector, entries sorted by index with no duplicates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    pub dims: usize,
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i] * v).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}

fn bucket(parts: &[&str], dims: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write_usize(parts.len());
    for p in parts {
        h.write(p.as_bytes());
        h.write_u8(0xff);
    }
    (h.finish() % dims as u64) as usize
}

/// Hashed n-gram counts of `text`, L2-normalized.
pub fn featurize(text: &str, config: &FeaturizerConfig) -> FeatureVector {
    let tokens = config.tokenizer.tokenize(text);
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for n in 1..=config.max_ngram.max(1) {
        for gram in tokens.windows(n) {
            let parts: Vec<&str> = gram.iter().map(String::as_str).collect();
            *counts.entry(bucket(&parts, config.dims)).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|&(i, _)| i);
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    FeatureVector {
        dims: config.dims,
        entries,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Select,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub action: Action,
    pub log_prob: f64,
    pub select_prob: f64,
}

/// Gradient over a policy's flat parameter vector, as sparse `(index, value)` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGrad {
    pub entries: Vec<(usize, f64)>,
}

impl SparseGrad {
    pub fn scaled(mut self, by: f64) -> Self {
        for e in &mut self.entries {
            e.1 *= by;
        }
        self
    }

    pub fn add_to(&self, dense: &mut [f64], scale: f64) {
        for &(i, v) in &self.entries {
            dense[i] += scale * v;
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .iter()
            .filter(|(i, _)| *i == index)
            .map(|(_, v)| v)
            .sum()
    }
}

const PROB_FLOOR: f64 = 1e-15;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// A Bernoulli select/reject policy with a logistic link.
pub trait SelectionPolicy {
    fn featurize(&self, post: &Post) -> FeatureVector;

    /// Pre-sigmoid selection score.
    fn logit(&self, x: &FeatureVector) -> f64;

    /// Gradient of [`Self::logit`] with respect to the flat parameters.
    fn grad_logit(&self, x: &FeatureVector) -> SparseGrad;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Train/eval switch reserved for stochastic layers such as dropout.
    fn set_training(&mut self, _training: bool) {}

    /// Selection probability, kept inside the open interval (0, 1).
    fn select_probability(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.logit(x)).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    fn log_prob(&self, x: &FeatureVector, action: Action) -> f64 {
        let z = self.logit(x);
        match action {
            Action::Select => -softplus(-z),
            Action::Reject => -softplus(z),
        }
    }

    /// Gradient of ln π(action | x): `(1 - p) ∇z` for select, `-p ∇z` for reject.
    fn grad_log_prob(&self, x: &FeatureVector, action: Action) -> SparseGrad {
        let p = sigmoid(self.logit(x));
        let coef = match action {
            Action::Select => 1.0 - p,
            Action::Reject => -p,
        };
        self.grad_logit(x).scaled(coef)
    }

    fn sample_action<R: Rng + ?Sized>(&self, x: &FeatureVector, rng: &mut R) -> ActionSample
    where
        Self: Sized,
    {
        let p = self.select_probability(x);
        let action = if rng.gen::<f64>() < p {
            Action::Select
        } else {
            Action::Reject
        };
        ActionSample {
            action,
            log_prob: match action {
                Action::Select => p.ln(),
                Action::Reject => (1.0 - p).ln(),
            },
            select_prob: p,
        }
    }

    fn check_finite(&self) -> Result<(), PolicyError> {
        if self.params().iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(PolicyError::NonFinite)
        }
    }

    fn featurize_profile(&self, profile: &Profile) -> Vec<FeatureVector> {
        profile.posts.iter().map(|p| self.featurize(p)).collect()
    }
}

/// Logistic regression over hashed n-gram features. Parameters are stored
/// flat: `dims` weights followed by the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPolicy {
    pub featurizer: FeaturizerConfig,
    params: Vec<f64>,
    training: bool,
}

impl LinearPolicy {
    pub fn new(featurizer: FeaturizerConfig) -> Self {
        let params = vec![0.0; featurizer.dims + 1];
        Self {
            featurizer,
            params,
            training: false,
        }
    }

    pub fn from_params(featurizer: FeaturizerConfig, params: Vec<f64>) -> Result<Self, PolicyError> {
        if params.len() != featurizer.dims + 1 {
            return Err(PolicyError::ShapeMismatch {
                expected: featurizer.dims + 1,
                found: params.len(),
            });
        }
        Ok(Self {
            featurizer,
            params,
            training: false,
        })
    }

    pub fn dims(&self) -> usize {
        self.featurizer.dims
    }

    pub fn theta(&self) -> &[f64] {
        &self.params[..self.featurizer.dims]
    }

    pub fn bias(&self) -> f64 {
        self.params[self.featurizer.dims]
    }

    pub fn set_bias(&mut self, b: f64) {
        let d = self.featurizer.dims;
        self.params[d] = b;
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        let d = self.featurizer.dims;
        &mut self.params[..d]
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn text_probability(&self, text: &str) -> f64 {
        self.select_probability(&featurize(text, &self.featurizer))
    }
}

impl SelectionPolicy for LinearPolicy {
    fn featurize(&self, post: &Post) -> FeatureVector {
        featurize(&post.text, &self.featurizer)
    }

    fn logit(&self, x: &FeatureVector) -> f64 {
        x.dot(&self.params) + self.bias()
    }

    fn grad_logit(&self, x: &FeatureVector) -> SparseGrad {
        let mut entries = x.entries.clone();
        entries.push((self.featurizer.dims, 1.0));
        SparseGrad { entries }
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
    }
}

/// Ranks post indices by descending select probability (ties by index) and
/// keeps the first `n`. `n` is raised to 1 so the result is never empty.
pub fn rank_top_n_features<P: SelectionPolicy>(
    policy: &P,
    features: &[FeatureVector],
    n: usize,
) -> Vec<usize> {
    let probs: Vec<f64> = features.iter().map(|x| policy.select_probability(x)).collect();
    let mut order = rank_descending(&probs);
    order.truncate(n.max(1));
    order
}

/// Indices of the top-`n` posts of `profile` in rank order.
pub fn rank_top_n<P: SelectionPolicy>(policy: &P, profile: &Profile, n: usize) -> Vec<usize> {
    rank_top_n_features(policy, &policy.featurize_profile(profile), n)
}

/// Dense gradient accumulator that remembers which entries it touched.
#[derive(Debug)]
pub(crate) struct GradBuffer {
    pub dense: Vec<f64>,
    touched: Vec<usize>,
}

impl GradBuffer {
    pub fn new(len: usize) -> Self {
        Self {
            dense: vec![0.0; len],
            touched: Vec::new(),
        }
    }

    pub fn add(&mut self, g: &SparseGrad, scale: f64) {
        for &(i, v) in &g.entries {
            self.dense[i] += scale * v;
            self.touched.push(i);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.touched.iter().all(|&i| self.dense[i].is_finite())
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.dense[i] = 0.0;
        }
        self.touched.clear();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Shuffle profile order each epoch.
    pub shuffle: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            seed: 0,
            shuffle: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean binary cross-entropy over all annotated posts before training.
    pub initial_loss: f64,
    /// The same loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn bce<P: SelectionPolicy>(policy: &P, data: &[(Vec<FeatureVector>, Vec<bool>)]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (xs, ys) in data {
        for (x, &y) in xs.iter().zip(ys) {
            let a = if y { Action::Select } else { Action::Reject };
            total -= policy.log_prob(x, a);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Supervised pre-training on relevance annotations: minimizes the binary
/// cross-entropy of the select probability against the relevant flag, one
/// optimizer step per profile (mean over its posts).
pub fn pretrain<P: SelectionPolicy>(
    policy: &mut P,
    annotations: &[RelevanceAnnotation],
    dataset: &Dataset,
    config: &PretrainConfig,
    optimizer: &mut Optimizer,
) -> Result<PretrainReport, PolicyError> {
    if annotations.is_empty() {
        return Err(PolicyError::NoAnnotations);
    }
    policy.check_finite()?;
    let lookup: HashMap<(&str, usize), bool> = annotations
        .iter()
        .map(|a| ((a.profile_id.as_str(), a.post_index), a.relevant))
        .collect();
    let mut data = Vec::with_capacity(dataset.len());
    for profile in &dataset.profiles {
        let mut ys = Vec::with_capacity(profile.posts.len());
        for post in &profile.posts {
            let y = lookup
                .get(&(profile.id.as_str(), post.index))
                .ok_or_else(|| PolicyError::MissingAnnotation {
                    profile_id: profile.id.clone(),
                    post_index: post.index,
                })?;
            ys.push(*y);
        }
        data.push((policy.featurize_profile(profile), ys));
    }

    let initial_loss = bce(policy, &data);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grad = GradBuffer::new(policy.params().len());
    policy.set_training(true);
    for _ in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let (xs, ys) = &data[i];
            if xs.is_empty() {
                continue;
            }
            let scale = 1.0 / xs.len() as f64;
            for (x, &y) in xs.iter().zip(ys) {
                let a = if y { Action::Select } else { Action::Reject };
                // d(-ln π)/dθ
                grad.add(&policy.grad_log_prob(x, a), -scale);
            }
            if !grad.is_finite() {
                policy.set_training(false);
                return Err(PolicyError::NonFinite);
            }
            optimizer.step(policy.params_mut(), &grad.dense);
            grad.clear();
        }
        epoch_losses.push(bce(policy, &data));
    }
    policy.set_training(false);
    Ok(PretrainReport {
        initial_loss,
        epoch_losses,
    })
}

/// Serialized policy plus training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format_version: u32,
    pub featurizer: FeaturizerConfig,
    #[serde(with = "crate::sparse_vec")]
    pub params: Vec<f64>,
    pub optimizer: Option<Optimizer>,
    /// The top-N setting this checkpoint was selected for, if any.
    pub top_n: Option<usize>,
    pub epoch: Option<usize>,
    pub valid_macro_f1: Option<f64>,
}

impl PolicyCheckpoint {
    pub fn new(policy: &LinearPolicy) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            featurizer: policy.featurizer.clone(),
            params: policy.params().to_vec(),
            optimizer: None,
            top_n: None,
            epoch: None,
            valid_macro_f1: None,
        }
    }

    pub fn policy(&self) -> Result<LinearPolicy, PolicyError> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(PolicyError::UnsupportedVersion(self.format_version));
        }
        let p = LinearPolicy::from_params(self.featurizer.clone(), self.params.clone())?;
        p.check_finite()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerConfig;

    fn small() -> FeaturizerConfig {
        FeaturizerConfig {
            dims: 64,
            ..FeaturizerConfig::default()
        }
    }

    #[test]
    fn featurize_examples() {
        let cfg = FeaturizerConfig::default();
        assert!(featurize("  ...  ", &cfg).is_zero());
        assert_eq!(featurize("same text", &cfg), featurize("same text", &cfg));
        assert_ne!(featurize("a b", &cfg), featurize("b a", &cfg));
        let x = featurize("one two three", &cfg);
        assert!((x.norm() - 1.0).abs() < 1e-12);
        assert!(x.entries.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(x.entries.iter().all(|&(i, _)| i < cfg.dims));
    }

    #[test]
    fn zero_policy_is_indifferent() {
        let p = LinearPolicy::new(small());
        let x = featurize("hello world", &p.featurizer);
        assert_eq!(p.select_probability(&x), 0.5);
    }

    #[test]
    fn probability_increases_with_bias() {
        let mut p = LinearPolicy::new(small());
        let x = featurize("hello", &p.featurizer);
        let mut last = 0.0;
        for b in [-50.0, -5.0, 0.0, 2.0, 10.0, 40.0, 1e3] {
            p.set_bias(b);
            let pr = p.select_probability(&x);
            assert!(pr > 0.0 && pr < 1.0);
            assert!(pr >= last);
            last = pr;
        }
        assert!(last > 1.0 - 1e-12);
    }

    #[test]
    fn grad_closed_form() {
        let p = LinearPolicy::new(small());
        let x = FeatureVector {
            dims: 64,
            entries: vec![(7, 1.0)],
        };
        let g = p.grad_log_prob(&x, Action::Select);
        assert_eq!(g.get(7), 0.5);
        assert_eq!(g.get(64), 0.5);
        let r = p.grad_log_prob(&x, Action::Reject);
        assert_eq!(r.get(7), -0.5);
    }

    #[test]
    fn select_and_reject_gradients_sum_to_one_minus_two_p() {
        let mut p = LinearPolicy::new(small());
        p.set_bias(0.7);
        p.theta_mut()[3] = -0.4;
        let x = featurize("alpha beta gamma", &p.featurizer);
        let prob = sigmoid(p.logit(&x));
        let s = p.grad_log_prob(&x, Action::Select);
        let r = p.grad_log_prob(&x, Action::Reject);
        for &(i, v) in &x.entries {
            let sum = s.get(i) + r.get(i);
            assert!((sum - v * (1.0 - 2.0 * prob)).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_seed_gives_same_actions() {
        let p = LinearPolicy::new(small());
        let x = featurize("x", &p.featurizer);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| p.sample_action(&x, &mut rng).action).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn sample_log_prob_is_consistent() {
        let mut p = LinearPolicy::new(small());
        p.set_bias(1.3);
        let x = featurize("x", &p.featurizer);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let s = p.sample_action(&x, &mut rng);
            let expect = match s.action {
                Action::Select => s.select_prob.ln(),
                Action::Reject => (1.0 - s.select_prob).ln(),
            };
            assert_eq!(s.log_prob, expect);
            assert!(s.log_prob <= 0.0);
            assert!((s.log_prob - p.log_prob(&x, s.action)).abs() < 1e-12);
        }
    }

    #[test]
    fn near_certain_selection() {
        let mut p = LinearPolicy::new(small());
        // sigmoid(b) = 1 - 1e-4
        p.set_bias((1.0f64 / 1e-4 - 1.0).ln());
        let x = FeatureVector::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let selected = (0..1000)
            .filter(|_| p.sample_action(&x, &mut rng).action == Action::Select)
            .count();
        assert!(selected >= 999);
    }

    #[test]
    fn rank_examples() {
        let p = LinearPolicy::new(small());
        let probs = [0.9, 0.1, 0.8];
        assert_eq!(rank_descending(&probs)[..2], [0, 2]);
        let profile = Profile::new("p", ["a", "b", "c"]);
        assert_eq!(rank_top_n(&p, &profile, 1), vec![0]);
        assert_eq!(rank_top_n(&p, &profile, 10), vec![0, 1, 2]);
        assert_eq!(rank_top_n(&p, &profile, 0), vec![0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut p = LinearPolicy::new(small());
        p.theta_mut()[5] = 0.25;
        p.set_bias(-0.5);
        let mut ck = PolicyCheckpoint::new(&p);
        let mut opt = Optimizer::new(OptimizerConfig::adamw(0.1));
        let mut params = p.params().to_vec();
        let mut g = vec![0.0; params.len()];
        g[5] = 1.0;
        opt.step(&mut params, &g);
        ck.optimizer = Some(opt);
        ck.top_n = Some(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = PolicyCheckpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.policy().unwrap(), p);
    }

    #[test]
    fn rejects_wrong_version_and_non_finite() {
        let p = LinearPolicy::new(small());
        let mut ck = PolicyCheckpoint::new(&p);
        ck.format_version = 99;
        assert!(matches!(ck.policy(), Err(PolicyError::UnsupportedVersion(99))));
        let mut ck = PolicyCheckpoint::new(&p);
        ck.params[0] = f64::NAN;
        assert!(matches!(ck.policy(), Err(PolicyError::NonFinite)));
    }
}
