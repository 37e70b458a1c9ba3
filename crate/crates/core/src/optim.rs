//! First-order optimizers over a flat parameter vector.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adaptive moments with decoupled weight decay.
    AdamW,
    /// Plain gradient descent, `p -= lr * g`.
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            learning_rate: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn adamw(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            weight_decay: 0.0,
            ..Self::default()
        }
    }
}

/// Optimizer state. Moment buffers are allocated on the first step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub steps: u64,
    #[serde(with = "crate::sparse_vec")]
    pub first_moment: Vec<f64>,
    #[serde(with = "crate::sparse_vec")]
    pub second_moment: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            steps: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// Applies one descent step for the loss gradient `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len(), "gradient length mismatch");
        self.steps += 1;
        let c = &self.config;
        match c.kind {
            OptimizerKind::Sgd => {
                let shrink = 1.0 - c.learning_rate * c.weight_decay;
                for (p, g) in params.iter_mut().zip(grad) {
                    *p = *p * shrink - c.learning_rate * g;
                }
            }
            OptimizerKind::AdamW => {
                if self.first_moment.len() != params.len() {
                    self.first_moment = vec![0.0; params.len()];
                    self.second_moment = vec![0.0; params.len()];
                }
                let t = self.steps as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                let shrink = 1.0 - c.learning_rate * c.weight_decay;
                let step_size = c.learning_rate / bc1;
                let bc2_sqrt = bc2.sqrt();
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    if *p == 0.0 && g == 0.0 && *m == 0.0 && *v == 0.0 {
                        continue;
                    }
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let denom = v.sqrt() / bc2_sqrt + c.epsilon;
                    *p = *p * shrink - step_size * *m / denom;
                }
            }
        }
    }
}
