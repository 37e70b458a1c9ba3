//! Policy-gradient training of the selection policy against classifier rewards.
//!
//! One episode is one profile: an action is sampled for every post, the
//! selected posts are classified, and the reward for that prediction drives
//! a REINFORCE step over all of the profile's actions. A moving average of
//! the last rewards serves as the baseline.

use std::collections::{BTreeMap, VecDeque};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnet::{Cnet, LevelPrediction, LlmError};
use crate::corpus::{Dataset, Level, Post, Profile};
use crate::evaluation::ConfusionTable;
use crate::optim::{Optimizer, OptimizerConfig};
use crate::policy::{rank_top_n_features, Action, ActionSample, FeatureVector, GradBuffer, PolicyError, SelectionPolicy};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("non-finite policy gradient")]
    NonFiniteGradient,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Penalty per selected post.
    pub lambda: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { lambda: 0.05 }
    }
}

/// `-2 + sign(|C|)(3 - 2|y - ŷ|) - λ|C|`: `1 - λ|C|` when correct,
/// `-1 - λ|C|` when wrong, `-2` when nothing was selected.
pub fn reward(gold: Level, predicted: Level, selected: usize, cfg: &RewardConfig) -> f64 {
    let sign = if selected > 0 { 1.0 } else { 0.0 };
    let miss = (gold.index() as f64 - predicted.index() as f64).abs();
    -2.0 + sign * (3.0 - 2.0 * miss) - cfg.lambda * selected as f64
}

/// Moving average over the most recent rewards; 0 before any reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineTracker {
    capacity: usize,
    window: VecDeque<f64>,
}

impl Default for BaselineTracker {
    fn default() -> Self {
        Self::new(10)
    }
}

impl BaselineTracker {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            window: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn value(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }

    pub fn push(&mut self, r: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(r);
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub profile_id: String,
    pub actions: Vec<ActionSample>,
    /// Indices of selected posts, ascending.
    pub selected: Vec<usize>,
    /// Absent when nothing was selected and the classifier was not asked.
    pub prediction: Option<LevelPrediction>,
    pub gold: Level,
    pub reward: f64,
}

impl EpisodeTrace {
    pub fn predicted(&self) -> Option<Level> {
        self.prediction.as_ref().map(|p| p.level)
    }
}

/// Samples one action per post in order and scores the selection.
pub fn rollout_episode<P: SelectionPolicy, R: Rng + ?Sized>(
    policy: &P,
    profile: &Profile,
    features: &[FeatureVector],
    gold: Level,
    cnet: &Cnet,
    reward_cfg: &RewardConfig,
    rng: &mut R,
) -> Result<EpisodeTrace, TrainError> {
    debug_assert_eq!(features.len(), profile.posts.len());
    let actions: Vec<ActionSample> = features.iter().map(|x| policy.sample_action(x, rng)).collect();
    let selected: Vec<usize> = actions
        .iter()
        .enumerate()
        .filter(|(_, a)| a.action == Action::Select)
        .map(|(i, _)| i)
        .collect();
    let (prediction, r) = if selected.is_empty() {
        (None, reward(gold, gold, 0, reward_cfg))
    } else {
        let posts: Vec<&Post> = selected.iter().map(|&i| &profile.posts[i]).collect();
        let pred = cnet.predict(&posts)?;
        let r = reward(gold, pred.level, selected.len(), reward_cfg);
        (Some(pred), r)
    };
    Ok(EpisodeTrace {
        profile_id: profile.id.clone(),
        actions,
        selected,
        prediction,
        gold,
        reward: r,
    })
}

/// Optimizer, baseline and gradient scratch space for REINFORCE updates.
#[derive(Debug)]
pub struct ReinforceLearner {
    pub optimizer: Optimizer,
    pub baseline: BaselineTracker,
    grad: GradBuffer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub baseline: f64,
    pub advantage: f64,
}

impl ReinforceLearner {
    pub fn new(optimizer: Optimizer, baseline: BaselineTracker, num_params: usize) -> Self {
        Self {
            optimizer,
            baseline,
            grad: GradBuffer::new(num_params),
        }
    }

    /// Ascends `(R - b) Σ_t ∇ ln π(a_t | s_t)` with one optimizer step, where
    /// `b` is the baseline before this episode; then records `R`.
    pub fn update<P: SelectionPolicy>(
        &mut self,
        policy: &mut P,
        trace: &EpisodeTrace,
        features: &[FeatureVector],
    ) -> Result<UpdateStats, TrainError> {
        let b = self.baseline.value();
        let advantage = trace.reward - b;
        for (x, a) in features.iter().zip(&trace.actions) {
            // the optimizer descends, so accumulate the negated objective
            self.grad.add(&policy.grad_log_prob(x, a.action), -advantage);
        }
        if !self.grad.is_finite() {
            self.grad.clear();
            return Err(TrainError::NonFiniteGradient);
        }
        self.optimizer.step(policy.params_mut(), &self.grad.dense);
        self.grad.clear();
        self.baseline.push(trace.reward);
        Ok(UpdateStats { baseline: b, advantage })
    }
}

/// One-shot form of [`ReinforceLearner::update`].
pub fn reinforce_update<P: SelectionPolicy>(
    policy: &mut P,
    trace: &EpisodeTrace,
    features: &[FeatureVector],
    baseline: &mut BaselineTracker,
    optimizer: &mut Optimizer,
) -> Result<UpdateStats, TrainError> {
    let mut learner = ReinforceLearner::new(
        std::mem::replace(optimizer, Optimizer::new(optimizer.config.clone())),
        std::mem::take(baseline),
        policy.params().len(),
    );
    let out = learner.update(policy, trace, features);
    *optimizer = learner.optimizer;
    *baseline = learner.baseline;
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Top-N settings validated after each validation round.
    pub top_ns: Vec<usize>,
    pub reward: RewardConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Validate every this many epochs (and always after the last one).
    pub validate_every: usize,
    /// Validate on a fixed random subset of this many profiles.
    pub valid_subsample: Option<usize>,
    /// Stop after this many validation rounds without improving any top-N.
    pub patience: Option<usize>,
    pub baseline_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            top_ns: vec![5, 10, 20, 30, 50],
            reward: RewardConfig::default(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
            validate_every: 1,
            valid_subsample: None,
            patience: None,
            baseline_window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be positive".into()));
        }
        if self.top_ns.is_empty() || self.top_ns.contains(&0) {
            return Err(TrainError::Config("top-N list must be non-empty and positive".into()));
        }
        if self.validate_every == 0 {
            return Err(TrainError::Config("validate_every must be positive".into()));
        }
        if !(self.reward.lambda >= 0.0 && self.reward.lambda.is_finite()) {
            return Err(TrainError::Config(format!("lambda {} must be finite and >= 0", self.reward.lambda)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_selected: f64,
    pub empty_selections: usize,
    /// Validation macro-F1 per top-N, when validated this epoch.
    pub valid_macro_f1: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug)]
pub struct BestCheckpoint<P> {
    pub policy: P,
    pub epoch: usize,
    pub macro_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<P> {
    pub best: BTreeMap<usize, BestCheckpoint<P>>,
    pub history: Vec<EpochRecord>,
    pub final_policy: P,
    pub classifier_requests: usize,
}

/// Macro-F1 of classifying each profile's top-N posts, for every N.
pub fn validate_top_n<P: SelectionPolicy>(
    policy: &P,
    valid: &Dataset,
    features: &[Vec<FeatureVector>],
    top_ns: &[usize],
    cnet: &Cnet,
) -> Result<BTreeMap<usize, f64>, TrainError> {
    let golds = valid.golds();
    let mut out = BTreeMap::new();
    for &n in top_ns {
        let jobs: Vec<Vec<&Post>> = valid
            .profiles
            .iter()
            .zip(features)
            .map(|(profile, xs)| {
                let mut idx = rank_top_n_features(policy, xs, n);
                idx.sort_unstable();
                idx.into_iter().map(|i| &profile.posts[i]).collect()
            })
            .collect();
        let mut predicted = Vec::with_capacity(jobs.len());
        for r in cnet.predict_many(&jobs) {
            predicted.push(r?.level);
        }
        let table = ConfusionTable::from_levels(&predicted, &golds).expect("aligned by construction");
        out.insert(n, table.macro_f1());
    }
    Ok(out)
}

/// Runs the training loop and keeps, for every top-N, the policy snapshot
/// with the highest validation macro-F1 (earliest on ties).
pub fn train<P: SelectionPolicy + Clone>(
    mut policy: P,
    train_set: &Dataset,
    valid_set: &Dataset,
    cnet: &Cnet,
    config: &TrainConfig,
) -> Result<TrainOutcome<P>, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if valid_set.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    policy.check_finite()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train_features: Vec<Vec<FeatureVector>> =
        train_set.profiles.iter().map(|p| policy.featurize_profile(p)).collect();
    let train_golds = train_set.golds();

    let valid_view = match config.valid_subsample {
        Some(k) if k < valid_set.len() => {
            let mut idx: Vec<usize> = (0..valid_set.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(k.max(1));
            idx.sort_unstable();
            Dataset {
                split: valid_set.split,
                target: valid_set.target,
                profiles: idx.into_iter().map(|i| valid_set.profiles[i].clone()).collect(),
            }
        }
        _ => valid_set.clone(),
    };
    let valid_features: Vec<Vec<FeatureVector>> =
        valid_view.profiles.iter().map(|p| policy.featurize_profile(p)).collect();

    let mut learner = ReinforceLearner::new(
        Optimizer::new(config.optimizer.clone()),
        BaselineTracker::new(config.baseline_window),
        policy.params().len(),
    );
    let mut best: BTreeMap<usize, BestCheckpoint<P>> = BTreeMap::new();
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut requests = 0usize;
    let mut stale_rounds = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        policy.set_training(true);
        let mut reward_sum = 0.0;
        let mut selected_sum = 0usize;
        let mut empty = 0usize;
        for &i in &order {
            let trace = rollout_episode(
                &policy,
                &train_set.profiles[i],
                &train_features[i],
                train_golds[i],
                cnet,
                &config.reward,
                &mut rng,
            )?;
            if trace.prediction.is_some() {
                requests += 1;
            } else {
                empty += 1;
            }
            reward_sum += trace.reward;
            selected_sum += trace.selected.len();
            learner.update(&mut policy, &trace, &train_features[i])?;
        }
        policy.set_training(false);

        let mut record = EpochRecord {
            epoch,
            mean_reward: reward_sum / order.len() as f64,
            mean_selected: selected_sum as f64 / order.len() as f64,
            empty_selections: empty,
            valid_macro_f1: BTreeMap::new(),
        };

        if epoch % config.validate_every == 0 || epoch == config.max_epochs {
            let scores = validate_top_n(&policy, &valid_view, &valid_features, &config.top_ns, cnet)?;
            requests += valid_view.len() * config.top_ns.len();
            let mut improved = false;
            for (&n, &f1) in &scores {
                let better = best.get(&n).is_none_or(|b| f1 > b.macro_f1);
                if better {
                    improved = true;
                    best.insert(
                        n,
                        BestCheckpoint {
                            policy: policy.clone(),
                            epoch,
                            macro_f1: f1,
                        },
                    );
                }
            }
            info!(
                "epoch {epoch}: reward {:.3}, selected {:.1}, valid {:?}",
                record.mean_reward, record.mean_selected, scores
            );
            record.valid_macro_f1 = scores;
            stale_rounds = if improved { 0 } else { stale_rounds + 1 };
            history.push(record);
            if config.patience.is_some_and(|p| stale_rounds >= p) {
                info!("no improvement for {stale_rounds} validation rounds; stopping at epoch {epoch}");
                break;
            }
        } else {
            history.push(record);
        }
    }

    Ok(TrainOutcome {
        best,
        history,
        final_policy: policy,
        classifier_requests: requests,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCheckpoint {
    pub epoch: usize,
    pub valid_macro_f1: f64,
    pub path: Option<String>,
}

/// Summary of a training run, written next to its checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub target: crate::corpus::Trait,
    pub config: TrainConfig,
    pub seed: u64,
    pub pretrain_losses: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: BTreeMap<usize, ManifestCheckpoint>,
}

impl RunManifest {
    pub fn new<P>(target: crate::corpus::Trait, config: &TrainConfig, outcome: &TrainOutcome<P>) -> Self {
        Self {
            target,
            config: config.clone(),
            seed: config.seed,
            pretrain_losses: Vec::new(),
            epochs: outcome.history.clone(),
            checkpoints: outcome
                .best
                .iter()
                .map(|(&n, b)| {
                    (
                        n,
                        ManifestCheckpoint {
                            epoch: b.epoch,
                            valid_macro_f1: b.macro_f1,
                            path: None,
                        },
                    )
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnet::{LlmClient, LlmEndpoint};
    use crate::corpus::{Split, Trait};
    use crate::optim::OptimizerConfig;
    use crate::policy::{featurize, FeaturizerConfig, LinearPolicy};
    use Level::{High, Low};

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn reward_examples() {
        assert!((reward(High, High, 3, &cfg()) - 0.85).abs() < 1e-15);
        for y in Level::BOTH {
            for yh in Level::BOTH {
                assert_eq!(reward(y, yh, 0, &cfg()), -2.0);
            }
        }
        assert!((reward(Low, High, 10, &cfg()) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn reward_decreases_with_selection_size() {
        for correct in [true, false] {
            let yh = if correct { High } else { Low };
            let rs: Vec<f64> = (1..50).map(|c| reward(High, yh, c, &cfg())).collect();
            assert!(rs.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn baseline_window_mean() {
        let mut b = BaselineTracker::new(10);
        assert_eq!(b.value(), 0.0);
        let rewards: Vec<f64> = (0..25).map(|i| i as f64 * 0.5 - 3.0).collect();
        for (n, &r) in rewards.iter().enumerate() {
            b.push(r);
            let k = (n + 1).min(10);
            let window = &rewards[n + 1 - k..=n];
            assert_eq!(b.value(), window.iter().sum::<f64>() / k as f64);
            assert!(b.len() <= 10);
        }
    }

    fn mock_cnet() -> Cnet {
        Cnet::new(LlmClient::connect(LlmEndpoint::mock()).unwrap(), Trait::Extraversion)
    }

    fn small_policy() -> LinearPolicy {
        LinearPolicy::new(FeaturizerConfig {
            dims: 256,
            ..FeaturizerConfig::default()
        })
    }

    fn profile() -> Profile {
        Profile::new("p", ["hi-marker party", "boring bus", "lo-marker nothing", "coffee"])
            .with_label(Trait::Extraversion, 0.4)
            .unwrap()
    }

    #[test]
    fn forced_select_all_and_none() {
        let cnet = mock_cnet();
        let prof = profile();
        let mut pol = small_policy();
        let xs = pol.featurize_profile(&prof);
        let mut rng = ChaCha8Rng::seed_from_u64(1);

        pol.set_bias(60.0);
        let t = rollout_episode(&pol, &prof, &xs, High, &cnet, &cfg(), &mut rng).unwrap();
        assert_eq!(t.selected, vec![0, 1, 2, 3]);
        assert!(t.prediction.is_some());

        pol.set_bias(-60.0);
        let before = cnet.client.mock_requests().unwrap();
        let t = rollout_episode(&pol, &prof, &xs, High, &cnet, &cfg(), &mut rng).unwrap();
        assert!(t.selected.is_empty());
        assert_eq!(t.reward, -2.0);
        assert!(t.prediction.is_none());
        assert_eq!(cnet.client.mock_requests().unwrap(), before);
    }

    #[test]
    fn rollout_replays_under_seed() {
        let cnet = mock_cnet();
        let prof = profile();
        let pol = small_policy();
        let xs = pol.featurize_profile(&prof);
        let run = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            rollout_episode(&pol, &prof, &xs, High, &cnet, &cfg(), &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
    }

    fn trace_for(pol: &LinearPolicy, xs: &[FeatureVector], actions: &[Action], reward: f64) -> EpisodeTrace {
        EpisodeTrace {
            profile_id: "p".into(),
            actions: xs
                .iter()
                .zip(actions)
                .map(|(x, &a)| ActionSample {
                    action: a,
                    log_prob: pol.log_prob(x, a),
                    select_prob: pol.select_probability(x),
                })
                .collect(),
            selected: vec![],
            prediction: None,
            gold: High,
            reward,
        }
    }

    #[test]
    fn zero_advantage_leaves_parameters() {
        let mut pol = small_policy();
        pol.theta_mut()[3] = 0.2;
        let xs = vec![featurize("a b c", &pol.featurizer)];
        let mut base = BaselineTracker::new(10);
        base.push(0.5);
        let trace = trace_for(&pol, &xs, &[Action::Select], 0.5);
        let before = pol.clone();
        let mut cfg = OptimizerConfig::adamw(0.1);
        cfg.weight_decay = 0.0;
        let mut opt = Optimizer::new(cfg);
        let stats = reinforce_update(&mut pol, &trace, &xs, &mut base, &mut opt).unwrap();
        assert_eq!(stats.advantage, 0.0);
        assert_eq!(pol, before);
        assert_eq!(base.len(), 2);
    }

    #[test]
    fn positive_advantage_moves_along_one_minus_p_x() {
        let mut pol = small_policy();
        let x = FeatureVector {
            dims: 256,
            entries: vec![(17, 1.0)],
        };
        let xs = vec![x];
        let trace = trace_for(&pol, &xs, &[Action::Select], 1.0);
        let mut base = BaselineTracker::new(10);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1));
        reinforce_update(&mut pol, &trace, &xs, &mut base, &mut opt).unwrap();
        // Δθ_17 = lr (R - b)(1 - p) x = 0.1 * 1 * 0.5
        assert!((pol.theta()[17] - 0.05).abs() < 1e-15);
        assert!((pol.bias() - 0.05).abs() < 1e-15);
        assert_eq!(pol.theta().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn surrogate_loss_decreases_after_small_step() {
        let mut pol = small_policy();
        pol.set_bias(0.3);
        let xs: Vec<FeatureVector> = ["alpha beta", "gamma", "delta epsilon zeta"]
            .iter()
            .map(|t| featurize(t, &pol.featurizer))
            .collect();
        let actions = [Action::Select, Action::Reject, Action::Select];
        for (reward, base_r) in [(1.0, -0.5), (-1.5, 0.2)] {
            let mut p = pol.clone();
            let trace = trace_for(&p, &xs, &actions, reward);
            let mut base = BaselineTracker::new(10);
            base.push(base_r);
            let adv = reward - base_r;
            let surrogate = |p: &LinearPolicy| -> f64 {
                -adv * xs.iter().zip(&actions).map(|(x, &a)| p.log_prob(x, a)).sum::<f64>()
            };
            let before = surrogate(&p);
            let mut opt = Optimizer::new(OptimizerConfig::sgd(1e-3));
            reinforce_update(&mut p, &trace, &xs, &mut base, &mut opt).unwrap();
            assert!(surrogate(&p) < before);
        }
    }

    #[test]
    fn config_rejects_zero_epochs() {
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let ds = Dataset::new(Split::Train, Trait::Extraversion, vec![profile()]).unwrap();
        let err = train(small_policy(), &ds, &ds, &mock_cnet(), &cfg).unwrap_err();
        assert!(matches!(err, TrainError::Config(_)));
    }

    #[test]
    fn empty_sets_rejected() {
        let ds = Dataset::new(Split::Train, Trait::Extraversion, vec![profile()]).unwrap();
        let empty = Dataset::new(Split::Valid, Trait::Extraversion, vec![]).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(small_policy(), &ds, &empty, &mock_cnet(), &cfg),
            Err(TrainError::EmptySet("validation"))
        ));
        assert!(matches!(
            train(small_policy(), &empty, &ds, &mock_cnet(), &cfg),
            Err(TrainError::EmptySet("training"))
        ));
    }
}
