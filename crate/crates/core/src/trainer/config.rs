use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{AgentSettings, AgentVariant};
use crate::env::EnvConfig;

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    /// Settings shared by every agent.
    pub agent: AgentSettings,
    /// Per-agent variant overrides; empty means `agent.variant` for everyone.
    pub variants: Vec<AgentVariant>,
    /// Episodes per parallel environment (one update round each).
    pub episodes: usize,
    pub parallel_envs: usize,
    /// One simulation per seed.
    pub seeds: Vec<u64>,
    /// Rounds between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
    /// Threads for stepping environments.
    pub workers: usize,
    /// Write the final episode of environment 0 as a JSONL trace.
    pub record_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvConfig::default(),
            agent: AgentSettings::default(),
            variants: Vec::new(),
            episodes: 2000,
            parallel_envs: 8,
            seeds: vec![0, 1, 2, 3, 4],
            checkpoint_every: 500,
            output_dir: PathBuf::from("runs/default"),
            workers: 1,
            record_trace: true,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.env.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.agent.validate().map_err(TrainError::Config)?;
        if self.episodes == 0 {
            return Err(TrainError::Config("episodes must be >= 1".into()));
        }
        if self.parallel_envs == 0 {
            return Err(TrainError::Config("parallel_envs must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(TrainError::Config("at least one seed is required".into()));
        }
        if !self.variants.is_empty() && self.variants.len() != self.env.num_agents {
            return Err(TrainError::Config(format!(
                "{} variants given for {} agents",
                self.variants.len(),
                self.env.num_agents
            )));
        }
        Ok(())
    }

    pub fn agent_settings(&self, agent: usize) -> AgentSettings {
        AgentSettings {
            variant: self.variants.get(agent).copied().unwrap_or(self.agent.variant),
            ..self.agent
        }
    }

    /// Sets a field by dotted path, e.g. `env.max_steps=50` or
    /// `agent.correction.scale=0.5`. The value is parsed as JSON when
    /// possible and taken as a string otherwise.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), TrainError> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| TrainError::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).map_err(|e| TrainError::Config(e.to_string()))?;
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(key))
                .ok_or_else(|| TrainError::Config(format!("unknown config key `{path}`")))?;
        }
        *slot = value;
        *self = serde_json::from_value(doc).map_err(|e| TrainError::Config(format!("`{assignment}`: {e}")))?;
        Ok(())
    }
}
