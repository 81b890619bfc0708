use crate::env::{Action, RewardEvent, RewardEventKind};
use crate::nn::{StepTape, ACTIONS};

/// One agent's view of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub observation: Vec<f64>,
    pub action: Action,
    pub mask: [bool; ACTIONS],
    pub log_prob: f64,
    pub entropy: f64,
    pub reward: f64,
    /// Events of this step addressed to the agent.
    pub events: Vec<RewardEvent>,
    /// Forward tape of the policy; `None` for the random agent.
    pub tape: Option<StepTape>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub agent: usize,
    pub env_index: usize,
    pub episode_index: u64,
    pub initial_hidden: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

/// Suffix of a trajectory from the step the agent's own door opened, with
/// returns built from collective-reward events only.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveSlice {
    pub start: usize,
    pub collective_returns: Vec<f64>,
}

impl CollectiveSlice {
    pub fn is_empty(&self) -> bool {
        self.collective_returns.is_empty()
    }

    pub fn len(&self) -> usize {
        self.collective_returns.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.collective_returns.iter().sum()
    }
}

/// `G_t = r_t + γ G_{t+1}` with `G` past the end equal to zero.
pub fn monte_carlo_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}

impl Trajectory {
    pub fn new(agent: usize, env_index: usize, episode_index: u64, initial_hidden: Vec<f64>) -> Self {
        Trajectory {
            agent,
            env_index,
            episode_index,
            initial_hidden,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn returns(&self, gamma: f64) -> Vec<f64> {
        monte_carlo_returns(&self.rewards(), gamma)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Step at which this agent opened its own door.
    pub fn own_door_step(&self) -> Option<usize> {
        self.steps.iter().position(|s| {
            s.events
                .iter()
                .any(|e| e.agent == self.agent && e.kind == RewardEventKind::OwnDoorOpened)
        })
    }

    pub fn collective_slice(&self, gamma: f64) -> CollectiveSlice {
        let Some(start) = self.own_door_step() else {
            return CollectiveSlice {
                start: self.steps.len(),
                collective_returns: Vec::new(),
            };
        };
        let collective: Vec<f64> = self.steps[start..]
            .iter()
            .map(|s| {
                s.events
                    .iter()
                    .filter(|e| e.agent == self.agent && e.kind == RewardEventKind::AllDoorsOpened)
                    .map(|e| e.amount)
                    .sum()
            })
            .collect();
        CollectiveSlice {
            start,
            collective_returns: monte_carlo_returns(&collective, gamma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_returns() {
        let g = monte_carlo_returns(&[0.0, 0.0, 1.0], 0.99);
        assert!((g[0] - 0.9801).abs() < 1e-15 && (g[1] - 0.99).abs() < 1e-15 && g[2] == 1.0);
        assert_eq!(monte_carlo_returns(&[0.0; 4], 0.99), vec![0.0; 4]);
        assert_eq!(monte_carlo_returns(&[0.3, -1.0, 2.0], 0.0), vec![0.3, -1.0, 2.0]);
    }

    fn step(events: Vec<RewardEvent>) -> StepRecord {
        StepRecord {
            observation: vec![],
            action: Action::Forward,
            mask: [true; 6],
            log_prob: 0.0,
            entropy: 0.0,
            reward: events.iter().map(|e| e.amount).sum(),
            events,
            tape: None,
        }
    }

    fn ev(kind: RewardEventKind, amount: f64, timestep: usize) -> RewardEvent {
        RewardEvent {
            agent: 0,
            kind,
            amount,
            timestep,
        }
    }

    #[test]
    fn slice_starts_at_own_door_and_drops_individual_reward() {
        let mut t = Trajectory::new(0, 0, 0, vec![]);
        t.steps.push(step(vec![]));
        t.steps.push(step(vec![ev(RewardEventKind::OwnDoorOpened, 0.5, 1)]));
        t.steps.push(step(vec![]));
        t.steps.push(step(vec![ev(RewardEventKind::AllDoorsOpened, 1.0, 3)]));
        let s = t.collective_slice(0.5);
        assert_eq!(s.start, 1);
        assert_eq!(s.collective_returns, vec![0.25, 0.5, 1.0]);
        assert_eq!(t.total_reward(), 1.5);
    }

    #[test]
    fn no_door_means_empty_slice() {
        let mut t = Trajectory::new(0, 0, 0, vec![]);
        t.steps.push(step(vec![]));
        assert!(t.collective_slice(0.99).is_empty());
    }
}
