use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require_both_classes, BaselineError};
use crate::corpus::{Dataset, Level, Profile};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::policy::{sigmoid, FeatureVector, FeaturizerConfig, GradBuffer, LinearPolicy, SelectionPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostLevelConfig {
    pub featurizer: FeaturizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for PostLevelConfig {
    fn default() -> Self {
        Self {
            featurizer: FeaturizerConfig::default(),
            epochs: 2,
            batch_size: 16,
            optimizer: OptimizerConfig::adamw(0.05),
            seed: 0,
        }
    }
}

/// Logistic post classifier; a post is "high" when its probability exceeds 0.5.
#[derive(Clone, Debug, PartialEq)]
pub struct PostLevelModel {
    pub classifier: LinearPolicy,
    /// Loss weights indexed by [`Level::index`].
    pub class_weights: [f64; 2],
}

/// High only on a strict majority of high votes.
pub fn majority_vote(votes: &[Level]) -> Level {
    let high = votes.iter().filter(|&&v| v == Level::High).count();
    if 2 * high > votes.len() {
        Level::High
    } else {
        Level::Low
    }
}

impl PostLevelModel {
    pub fn post_level(&self, x: &FeatureVector) -> Level {
        if self.classifier.logit(x) > 0.0 {
            Level::High
        } else {
            Level::Low
        }
    }

    pub fn votes(&self, profile: &Profile) -> Vec<Level> {
        self.classifier
            .featurize_profile(profile)
            .iter()
            .map(|x| self.post_level(x))
            .collect()
    }

    pub fn predict_majority(&self, profile: &Profile) -> Level {
        majority_vote(&self.votes(profile))
    }
}

/// Trains on posts that inherit their profile's label, with cross-entropy
/// weighted by inverse class frequency (`total / (2 · count)`).
pub fn train_post_level(train: &Dataset, config: &PostLevelConfig) -> Result<PostLevelModel, BaselineError> {
    if train.num_posts() == 0 {
        return Err(BaselineError::EmptyCorpus);
    }
    require_both_classes(train.golds())?;
    if config.batch_size == 0 {
        return Err(BaselineError::Config("batch_size must be positive".into()));
    }
    let mut classifier = LinearPolicy::new(config.featurizer.clone());
    let mut examples: Vec<(FeatureVector, Level)> = Vec::with_capacity(train.num_posts());
    for (i, p) in train.profiles.iter().enumerate() {
        let gold = train.gold(i);
        examples.extend(classifier.featurize_profile(p).into_iter().map(|x| (x, gold)));
    }
    let mut counts = [0usize; 2];
    for (_, l) in &examples {
        counts[l.index()] += 1;
    }
    let total = examples.len() as f64;
    let class_weights = [total / (2.0 * counts[0] as f64), total / (2.0 * counts[1] as f64)];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Optimizer::new(config.optimizer.clone());
    let mut grad = GradBuffer::new(classifier.params().len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                let (x, level) = &examples[i];
                let y = if *level == Level::High { 1.0 } else { 0.0 };
                let p = sigmoid(classifier.logit(x));
                let scale = class_weights[level.index()] * (p - y) / batch.len() as f64;
                grad.add(&classifier.grad_logit(x), scale);
            }
            optimizer.step(classifier.params_mut(), &grad.dense);
            grad.clear();
        }
    }
    Ok(PostLevelModel {
        classifier,
        class_weights,
    })
}
