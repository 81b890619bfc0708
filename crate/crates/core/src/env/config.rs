use serde::{Deserialize, Serialize};

use super::EnvError;

/// How rewards are shaped on top of the standard individual/collective rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    #[default]
    Standard,
    /// +1 once per episode for the first key drop after the agent's own door opened.
    Oracle,
    /// Penalty for every step an agent keeps the key after its own door opened.
    Punishment,
    /// Decaying zero-mean noise rewards next to genuine reward events.
    Injection,
    /// Collective reward removed.
    IndividualOnly,
    /// Individual reward removed.
    CollectiveOnly,
}

/// Order in which agents act within one environment step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TurnOrder {
    #[default]
    Fixed,
    Alternating,
    RandomEachEpisode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsFlag {
    DoorKeyStatus,
    LastAction,
}

/// Optional observation segments appended to the egocentric view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<ObsFlag>", into = "Vec<ObsFlag>")]
pub struct ObsFlags {
    pub door_key_status: bool,
    pub last_action: bool,
}

impl ObsFlags {
    pub const NONE: ObsFlags = ObsFlags {
        door_key_status: false,
        last_action: false,
    };

    pub fn with_last_action() -> Self {
        ObsFlags {
            door_key_status: false,
            last_action: true,
        }
    }

    pub fn all() -> Self {
        ObsFlags {
            door_key_status: true,
            last_action: true,
        }
    }

    /// Parses a comma separated list such as `door_key_status,last_action`.
    /// An empty string or `none` yields no flags.
    pub fn parse_list(list: &str) -> Result<Self, EnvError> {
        let mut flags = ObsFlags::NONE;
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "door_key_status" => flags.door_key_status = true,
                "last_action" => flags.last_action = true,
                "none" => {}
                other => return Err(EnvError::InvalidConfig(format!("unknown observation flag `{other}`"))),
            }
        }
        Ok(flags)
    }
}

impl From<Vec<ObsFlag>> for ObsFlags {
    fn from(list: Vec<ObsFlag>) -> Self {
        let mut flags = ObsFlags::NONE;
        for f in list {
            match f {
                ObsFlag::DoorKeyStatus => flags.door_key_status = true,
                ObsFlag::LastAction => flags.last_action = true,
            }
        }
        flags
    }
}

impl From<ObsFlags> for Vec<ObsFlag> {
    fn from(flags: ObsFlags) -> Self {
        let mut out = Vec::new();
        if flags.door_key_status {
            out.push(ObsFlag::DoorKeyStatus);
        }
        if flags.last_action {
            out.push(ObsFlag::LastAction);
        }
        out
    }
}

/// Static description of one Manitokan environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub grid_width: usize,
    pub grid_height: usize,
    pub num_agents: usize,
    pub max_steps: usize,
    pub discount: f64,
    /// Individual reward for opening one's own door. The collective reward
    /// is the sum of all agents' individual rewards.
    pub reward_individual: f64,
    pub reward_variant: RewardVariant,
    /// Magnitude of the per-step penalty of the punishment variant.
    pub punishment_per_step: f64,
    pub injection_scale: f64,
    pub injection_decay: f64,
    pub turn_order: TurnOrder,
    pub obs_flags: ObsFlags,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            grid_width: 4,
            grid_height: 4,
            num_agents: 2,
            max_steps: 150,
            discount: 0.99,
            reward_individual: 0.5,
            reward_variant: RewardVariant::Standard,
            punishment_per_step: 0.5,
            injection_scale: 0.1,
            injection_decay: 0.999,
            turn_order: TurnOrder::Fixed,
            obs_flags: ObsFlags::NONE,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.grid_width < 3 || self.grid_height < 3 {
            return bad(format!(
                "grid must be at least 3x3, got {}x{}",
                self.grid_width, self.grid_height
            ));
        }
        if self.num_agents < 2 {
            return bad(format!("need at least 2 agents, got {}", self.num_agents));
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount must lie in (0, 1], got {}", self.discount));
        }
        for (name, v) in [
            ("reward_individual", self.reward_individual),
            ("punishment_per_step", self.punishment_per_step),
            ("injection_scale", self.injection_scale),
            ("injection_decay", self.injection_decay),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Collective reward granted to every agent when the last door opens.
    pub fn collective_reward(&self) -> f64 {
        self.reward_individual * self.num_agents as f64
    }

    pub fn cell_count(&self) -> usize {
        self.grid_width * self.grid_height
    }

    pub fn obs_len(&self) -> usize {
        super::observation::obs_len(self.obs_flags)
    }
}
