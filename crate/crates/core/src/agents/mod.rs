//! Independent recurrent policy-gradient agents.

pub mod correction;
pub mod toy;
pub mod trajectory;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, ObsFlags};
use crate::nn::{
    checkpoint, CriticNet, MaskedCategorical, NnError, RecurrentPolicyNet, RmspropConfig, RmspropState, StepTape,
    UpdateOutcome, ACTIONS, DEFAULT_HIDDEN,
};

pub use correction::{correction_term, CollectiveObjective, CorrectionEstimator, CorrectionMode, SliceObjective};
pub use toy::{verify_theorem1, TheoremReport, ToyObjective, ToySpec};
pub use trajectory::{monte_carlo_returns, CollectiveSlice, StepRecord, Trajectory};

pub const DEFAULT_ENTROPY_COEF: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("cross correction needs the partner's parameters")]
    MissingPartner,
    #[error("agent checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    Random,
    VanillaPg,
    MaxEntropyPg,
    CorrectionPg,
    SelfCorrectionPg,
    AntiCollectivePg,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 6] = [
        AgentVariant::Random,
        AgentVariant::VanillaPg,
        AgentVariant::MaxEntropyPg,
        AgentVariant::CorrectionPg,
        AgentVariant::SelfCorrectionPg,
        AgentVariant::AntiCollectivePg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentVariant::Random => "random",
            AgentVariant::VanillaPg => "vanilla_pg",
            AgentVariant::MaxEntropyPg => "max_entropy_pg",
            AgentVariant::CorrectionPg => "correction_pg",
            AgentVariant::SelfCorrectionPg => "self_correction_pg",
            AgentVariant::AntiCollectivePg => "anti_collective_pg",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let norm = name.replace('-', "_");
        Self::ALL.into_iter().find(|v| v.name() == norm)
    }

    pub fn learns(self) -> bool {
        self != AgentVariant::Random
    }

    /// Mode and sign of the correction term, if the variant uses one.
    pub fn correction(self) -> Option<(CorrectionMode, f64)> {
        match self {
            AgentVariant::CorrectionPg => Some((CorrectionMode::Cross, 1.0)),
            AgentVariant::SelfCorrectionPg => Some((CorrectionMode::SelfCorrection, 1.0)),
            AgentVariant::AntiCollectivePg => Some((CorrectionMode::SelfCorrection, -1.0)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionSettings {
    pub epsilon_hvp: f64,
    pub psi_floor: f64,
    pub scale: f64,
}

impl Default for CorrectionSettings {
    fn default() -> Self {
        CorrectionSettings {
            epsilon_hvp: correction::DEFAULT_EPSILON_HVP,
            psi_floor: correction::DEFAULT_PSI_FLOOR,
            scale: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub variant: AgentVariant,
    /// Only read by `max_entropy_pg`.
    pub entropy_coef: f64,
    pub hidden: usize,
    pub correction: CorrectionSettings,
    pub optimizer: RmspropConfig,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            variant: AgentVariant::VanillaPg,
            entropy_coef: DEFAULT_ENTROPY_COEF,
            hidden: DEFAULT_HIDDEN,
            correction: CorrectionSettings::default(),
            optimizer: RmspropConfig::default(),
        }
    }
}

impl AgentSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.entropy_coef.is_nan() || self.entropy_coef < 0.0 {
            return Err("entropy_coef must be >= 0".into());
        }
        if self.correction.psi_floor.is_nan() || self.correction.psi_floor <= 0.0 {
            return Err("psi_floor must be > 0".into());
        }
        if self.correction.epsilon_hvp.is_nan() || self.correction.epsilon_hvp <= 0.0 {
            return Err("epsilon_hvp must be > 0".into());
        }
        if self.hidden == 0 {
            return Err("hidden size must be >= 1".into());
        }
        Ok(())
    }

    pub fn estimator(&self) -> Option<CorrectionEstimator> {
        self.variant.correction().map(|(mode, sign)| CorrectionEstimator {
            epsilon_hvp: self.correction.epsilon_hvp,
            psi_floor: self.correction.psi_floor,
            sign,
            mode,
        })
    }
}

/// Result of one call to [`Agent::act`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActOutput {
    pub action: Action,
    pub log_prob: f64,
    pub entropy: f64,
    pub new_hidden: Vec<f64>,
    pub tape: Option<StepTape>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_entropy: f64,
    pub actor_grad_norm: f64,
    pub correction_norm: f64,
    pub collective_slices: usize,
    pub actor_applied: bool,
    pub critic_applied: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub index: usize,
    pub settings: AgentSettings,
    pub policy: RecurrentPolicyNet,
    pub critic: CriticNet,
    pub target_critic: CriticNet,
    actor_opt: RmspropState,
    critic_opt: RmspropState,
}

impl Agent {
    pub fn new<R: Rng>(index: usize, input_dim: usize, settings: AgentSettings, rng: &mut R) -> Self {
        let policy = RecurrentPolicyNet::new(input_dim, settings.hidden, rng);
        let critic = CriticNet::new(input_dim, settings.hidden, rng);
        Self::from_nets(index, settings, policy, critic)
    }

    pub fn from_nets(index: usize, settings: AgentSettings, policy: RecurrentPolicyNet, critic: CriticNet) -> Self {
        let actor_opt = RmspropState::new(settings.optimizer, policy.num_params());
        let critic_opt = RmspropState::new(settings.optimizer, critic.num_params());
        Agent {
            index,
            settings,
            target_critic: critic.clone(),
            policy,
            critic,
            actor_opt,
            critic_opt,
        }
    }

    pub fn variant(&self) -> AgentVariant {
        self.settings.variant
    }

    pub fn initial_hidden(&self) -> Vec<f64> {
        self.policy.initial_hidden()
    }

    /// Samples a legal action. The random variant ignores the network and
    /// draws from the masked uniform distribution.
    pub fn act<R: Rng>(
        &self,
        obs: &[f64],
        hidden: &[f64],
        mask: &[bool; ACTIONS],
        rng: &mut R,
    ) -> Result<ActOutput, AgentError> {
        let (dist, tape, new_hidden) = if self.settings.variant == AgentVariant::Random {
            (MaskedCategorical::uniform(mask)?, None, hidden.to_vec())
        } else {
            let tape = self.policy.forward(obs, hidden)?;
            let dist = MaskedCategorical::new(&tape.logits, mask)?;
            let h = tape.h_new.clone();
            (dist, Some(tape), h)
        };
        let a = dist.sample(rng);
        Ok(ActOutput {
            action: Action::from_index(a).expect("index below ACTIONS"),
            log_prob: dist.log_prob(a),
            entropy: dist.entropy(),
            new_hidden,
            tape,
        })
    }

    /// One policy-gradient step on a batch of this agent's trajectories.
    ///
    /// `partner_params` is read only by the cross-mode correction.
    pub fn pg_update(
        &mut self,
        trajectories: &[Trajectory],
        partner_params: Option<&[f64]>,
        gamma: f64,
    ) -> Result<UpdateStats, AgentError> {
        let mut stats = UpdateStats {
            actor_loss: 0.0,
            critic_loss: 0.0,
            mean_entropy: 0.0,
            actor_grad_norm: 0.0,
            correction_norm: 0.0,
            collective_slices: 0,
            actor_applied: false,
            critic_applied: false,
        };
        if !self.settings.variant.learns() || trajectories.is_empty() {
            return Ok(stats);
        }
        let batch = trajectories.len() as f64;
        let beta = if self.settings.variant == AgentVariant::MaxEntropyPg {
            self.settings.entropy_coef
        } else {
            0.0
        };
        let params = self.policy.params().values().to_vec();
        let mut actor_grad = vec![0.0; params.len()];
        let mut critic_grad = vec![0.0; self.critic.num_params()];
        let critic_params = self.critic.params().values().to_vec();
        let total_steps: usize = trajectories.iter().map(Trajectory::len).sum();
        let mut entropy_sum = 0.0;

        for traj in trajectories {
            let returns = traj.returns(gamma);
            let mut tapes = Vec::with_capacity(traj.len());
            let mut out = Vec::with_capacity(traj.len());
            for (step, &g) in traj.steps.iter().zip(&returns) {
                let tape = match &step.tape {
                    Some(t) => t.clone(),
                    None => {
                        let h = tapes.last().map_or(&traj.initial_hidden, |t: &StepTape| &t.h_new);
                        self.policy.forward(&step.observation, h)?
                    }
                };
                let dist = MaskedCategorical::new(&tape.logits, &step.mask)?;
                let a = step.action.index();
                let baseline = self.target_critic.value(&step.observation)?;
                let advantage = g - baseline;
                let log_prob = dist.log_prob(a);
                stats.actor_loss -= log_prob * advantage / batch;
                entropy_sum += dist.entropy();
                let glp = dist.grad_log_prob(a);
                let mut d = [0.0; ACTIONS];
                for k in 0..ACTIONS {
                    d[k] = -advantage * glp[k] / batch;
                }
                if beta != 0.0 {
                    stats.actor_loss -= beta * dist.entropy() / batch;
                    let gh = dist.grad_entropy();
                    for k in 0..ACTIONS {
                        d[k] -= beta * gh[k] / batch;
                    }
                }
                out.push(d);

                let ctape = self.critic.forward_with(&critic_params, &step.observation)?;
                let err = ctape.value - g;
                stats.critic_loss += err * err / total_steps as f64;
                self.critic
                    .backward_into(&critic_params, &ctape, 2.0 * err / total_steps as f64, &mut critic_grad);
                tapes.push(tape);
            }
            self.policy.backward_into(&params, &tapes, &out, &mut actor_grad)?;
        }
        stats.mean_entropy = entropy_sum / total_steps.max(1) as f64;
        if !stats.actor_loss.is_finite() {
            return Err(AgentError::NonFinite("actor loss"));
        }
        if !stats.critic_loss.is_finite() {
            return Err(AgentError::NonFinite("critic loss"));
        }

        if let Some(estimator) = self.settings.estimator() {
            stats.collective_slices = SliceObjective::new(&self.policy, trajectories, gamma).num_slices();
            let adjustment = correction_term(&estimator, &self.policy, &params, partner_params, trajectories, gamma)?;
            let scale = self.settings.correction.scale;
            // The loss gradient is descended, so the ascent term enters negated.
            for (g, a) in actor_grad.iter_mut().zip(&adjustment) {
                *g -= scale * a;
            }
            stats.correction_norm = crate::nn::kernels::l2_norm(&adjustment);
        }

        let outcome = self
            .actor_opt
            .update(self.policy.params_mut().values_mut(), &actor_grad)?;
        stats.actor_applied = outcome.applied();
        stats.actor_grad_norm = match outcome {
            UpdateOutcome::Applied { grad_norm } | UpdateOutcome::Skipped { grad_norm } => grad_norm,
        };
        stats.critic_applied = self
            .critic_opt
            .update(self.critic.params_mut().values_mut(), &critic_grad)?
            .applied();
        self.target_critic = self.critic.clone();
        Ok(stats)
    }

    pub fn save(&self, dir: &Path, manifest: &AgentManifest) -> Result<(), AgentError> {
        fs::create_dir_all(dir).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        checkpoint::save_parameters(self.policy.params(), &dir.join("actor.bin"))?;
        checkpoint::save_parameters(self.critic.params(), &dir.join("critic.bin"))?;
        let json = serde_json::to_vec_pretty(manifest).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        checkpoint::write_atomic(&dir.join("agent.json"), &json).map_err(|e| AgentError::Checkpoint(e.to_string()))
    }

    pub fn load(dir: &Path) -> Result<(Agent, AgentManifest), AgentError> {
        let raw = fs::read(dir.join("agent.json")).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let manifest: AgentManifest =
            serde_json::from_slice(&raw).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let actor = checkpoint::load_parameters(&dir.join("actor.bin"))?;
        let critic = checkpoint::load_parameters(&dir.join("critic.bin"))?;
        let mut policy = RecurrentPolicyNet::zeros(manifest.input_dim, manifest.settings.hidden);
        let mut critic_net = CriticNet::zeros(manifest.input_dim, manifest.settings.hidden);
        if !policy.params().same_layout(&actor) || !critic_net.params().same_layout(&critic) {
            return Err(AgentError::Checkpoint(
                "parameter layout does not match the manifest".into(),
            ));
        }
        policy.params_mut().set_values(actor.values())?;
        critic_net.params_mut().set_values(critic.values())?;
        Ok((
            Agent::from_nets(manifest.agent, manifest.settings, policy, critic_net),
            manifest,
        ))
    }
}

/// JSON description stored next to an agent's parameter files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentManifest {
    pub agent: usize,
    pub settings: AgentSettings,
    pub obs_flags: ObsFlags,
    pub input_dim: usize,
    pub seed: u64,
    pub round: usize,
}
