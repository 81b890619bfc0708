use serde::{Deserialize, Serialize};

use super::kernels::l2_norm;
use super::NnError;

pub const DEFAULT_ALPHA: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_LEARNING_RATE: f64 = 5e-5;
pub const DEFAULT_MAX_GRAD_NORM: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub alpha: f64,
    pub epsilon: f64,
    /// Updates whose global gradient norm exceeds this are skipped.
    pub max_grad_norm: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            max_grad_norm: DEFAULT_MAX_GRAD_NORM,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateOutcome {
    Applied { grad_norm: f64 },
    Skipped { grad_norm: f64 },
}

impl UpdateOutcome {
    pub fn applied(&self) -> bool {
        matches!(self, UpdateOutcome::Applied { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmspropState {
    pub config: RmspropConfig,
    acc: Vec<f64>,
}

impl RmspropState {
    pub fn new(config: RmspropConfig, len: usize) -> Self {
        RmspropState {
            config,
            acc: vec![0.0; len],
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }

    /// `acc ← α·acc + (1−α)·g²; θ ← θ − lr·g/(√acc + ε)`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<UpdateOutcome, NnError> {
        if params.len() != self.acc.len() || grads.len() != self.acc.len() {
            return Err(NnError::Dimension {
                what: "optimizer gradient",
                expected: self.acc.len(),
                got: if params.len() != self.acc.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index });
        }
        let grad_norm = l2_norm(grads);
        if grad_norm > self.config.max_grad_norm {
            log::warn!(
                "skipping update: gradient norm {grad_norm:.3e} exceeds {:.1e}",
                self.config.max_grad_norm
            );
            return Ok(UpdateOutcome::Skipped { grad_norm });
        }
        let RmspropConfig {
            learning_rate,
            alpha,
            epsilon,
            ..
        } = self.config;
        for ((p, a), &g) in params.iter_mut().zip(self.acc.iter_mut()).zip(grads) {
            *a = alpha * *a + (1.0 - alpha) * g * g;
            *p -= learning_rate * g / (a.sqrt() + epsilon);
        }
        Ok(UpdateOutcome::Applied { grad_norm })
    }
}
