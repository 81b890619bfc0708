use serde::{Deserialize, Serialize};

use super::trajectory::{CollectiveSlice, Trajectory};
use super::AgentError;
use crate::nn::{grad_of_grad, MaskedCategorical, RecurrentPolicyNet, ACTIONS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    /// Differentiate the partner's collective objective (reads partner parameters).
    Cross,
    /// Use the agent's own parameters for both roles.
    #[serde(rename = "self")]
    SelfCorrection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEstimator {
    pub epsilon_hvp: f64,
    /// Smallest magnitude allowed in the denominator of Ψ.
    pub psi_floor: f64,
    /// `+1` pushes toward the collective reward, `-1` away from it.
    pub sign: f64,
    pub mode: CorrectionMode,
}

pub const DEFAULT_EPSILON_HVP: f64 = 1e-5;
pub const DEFAULT_PSI_FLOOR: f64 = 1e-2;

impl CorrectionEstimator {
    pub fn new(mode: CorrectionMode, sign: f64) -> Self {
        CorrectionEstimator {
            epsilon_hvp: DEFAULT_EPSILON_HVP,
            psi_floor: DEFAULT_PSI_FLOOR,
            sign,
            mode,
        }
    }

    /// `1 / clamp(m)` per coordinate, with `|m|` raised to at least
    /// `psi_floor` and its sign kept (zero counts as positive).
    pub fn psi(&self, mean_score: &[f64]) -> Vec<f64> {
        mean_score
            .iter()
            .map(|&m| {
                let mag = m.abs().max(self.psi_floor);
                if m < 0.0 {
                    -1.0 / mag
                } else {
                    1.0 / mag
                }
            })
            .collect()
    }

    /// `sign · H (Ψ / d)`, where `H` is the derivative of the objective's
    /// gradient with respect to the surrogate parameters and `d` their count.
    pub fn estimate<O: CollectiveObjective + ?Sized>(&self, objective: &O, surrogate: &[f64]) -> Vec<f64> {
        let out_len = objective.output_len();
        let Some(score) = objective.collective_score(surrogate) else {
            return vec![0.0; out_len];
        };
        let d = score.len() as f64;
        let direction: Vec<f64> = self.psi(&score).into_iter().map(|p| p / d).collect();
        let mut hv = grad_of_grad(|p| objective.gradient(p), surrogate, &direction, self.epsilon_hvp);
        for v in &mut hv {
            *v *= self.sign;
        }
        hv
    }
}

/// A sampled or exact collective objective seen from the corrected agent.
pub trait CollectiveObjective {
    /// Length of [`CollectiveObjective::gradient`].
    fn output_len(&self) -> usize;

    /// Gradient with respect to the corrected agent's parameters, as a
    /// function of the surrogate parameters.
    fn gradient(&self, surrogate: &[f64]) -> Vec<f64>;

    /// Collective-reward-weighted mean score of the surrogate policy, or
    /// `None` when no collective reward was observed.
    fn collective_score(&self, surrogate: &[f64]) -> Option<Vec<f64>>;
}

/// `Ĵ_c(θ) = (1/B) Σ_slices Σ_t Ĝ^c_t log π(a_t | o_t; θ)` over a batch of
/// trajectories, with episode data held fixed.
pub struct SliceObjective<'a> {
    net: &'a RecurrentPolicyNet,
    items: Vec<(&'a Trajectory, CollectiveSlice)>,
    batch: usize,
    total_weight: f64,
}

impl<'a> SliceObjective<'a> {
    pub fn new(net: &'a RecurrentPolicyNet, trajectories: &'a [Trajectory], gamma: f64) -> Self {
        let items: Vec<_> = trajectories
            .iter()
            .map(|t| (t, t.collective_slice(gamma)))
            .filter(|(_, s)| !s.is_empty())
            .collect();
        let total_weight = items.iter().map(|(_, s)| s.total_weight()).sum();
        SliceObjective {
            net,
            items,
            batch: trajectories.len().max(1),
            total_weight,
        }
    }

    pub fn num_slices(&self) -> usize {
        self.items.len()
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let mut total = 0.0;
        for (traj, slice) in &self.items {
            let tapes = self.unroll(params, traj, slice.start + slice.len());
            for (k, g) in slice.collective_returns.iter().enumerate() {
                let t = slice.start + k;
                let step = &traj.steps[t];
                let dist = MaskedCategorical::new(&tapes[t].logits, &step.mask).expect("recorded mask is legal");
                total += g * dist.log_prob(step.action.index());
            }
        }
        total / self.batch as f64
    }

    fn unroll(&self, params: &[f64], traj: &Trajectory, len: usize) -> Vec<crate::nn::StepTape> {
        let inputs: Vec<&[f64]> = traj.steps[..len].iter().map(|s| s.observation.as_slice()).collect();
        self.net
            .unroll(params, &inputs, &traj.initial_hidden)
            .expect("trajectory matches the network it was collected with")
    }

    /// `Σ_slices Σ_t scale·Ĝ_t ∇log π_t`.
    fn weighted_score(&self, params: &[f64], scale: f64) -> Vec<f64> {
        let mut grad = vec![0.0; params.len()];
        for (traj, slice) in &self.items {
            let end = slice.start + slice.len();
            let tapes = self.unroll(params, traj, end);
            let mut out = vec![[0.0; ACTIONS]; end];
            for (k, g) in slice.collective_returns.iter().enumerate() {
                let t = slice.start + k;
                if *g == 0.0 {
                    continue;
                }
                let step = &traj.steps[t];
                let dist = MaskedCategorical::new(&tapes[t].logits, &step.mask).expect("recorded mask is legal");
                let glp = dist.grad_log_prob(step.action.index());
                for a in 0..ACTIONS {
                    out[t][a] = scale * g * glp[a];
                }
            }
            self.net
                .backward_into(params, &tapes, &out, &mut grad)
                .expect("tapes come from one unroll");
        }
        grad
    }
}

impl CollectiveObjective for SliceObjective<'_> {
    fn output_len(&self) -> usize {
        self.net.num_params()
    }

    fn gradient(&self, surrogate: &[f64]) -> Vec<f64> {
        self.weighted_score(surrogate, 1.0 / self.batch as f64)
    }

    fn collective_score(&self, surrogate: &[f64]) -> Option<Vec<f64>> {
        if self.items.is_empty() || self.total_weight == 0.0 {
            return None;
        }
        Some(self.weighted_score(surrogate, 1.0 / self.total_weight))
    }
}

/// Actor-gradient adjustment for one agent, estimated from its own
/// collective slices. Cross mode evaluates the slices under the partner's
/// parameters; self mode under the agent's own.
pub fn correction_term(
    estimator: &CorrectionEstimator,
    net: &RecurrentPolicyNet,
    own_params: &[f64],
    partner_params: Option<&[f64]>,
    trajectories: &[Trajectory],
    gamma: f64,
) -> Result<Vec<f64>, AgentError> {
    let objective = SliceObjective::new(net, trajectories, gamma);
    let surrogate = match estimator.mode {
        CorrectionMode::SelfCorrection => own_params,
        CorrectionMode::Cross => partner_params.ok_or(AgentError::MissingPartner)?,
    };
    Ok(estimator.estimate(&objective, surrogate))
}
