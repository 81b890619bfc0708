use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::observation::{encode_observation, Observation};
use super::reward::{apply_reward_variant, RewardEvent, RewardEventKind};
use super::{Action, Cell, EnvConfig, EnvError, Heading, TurnOrder};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPose {
    pub pos: Cell,
    pub heading: Heading,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Door {
    pub owner: usize,
    pub cell: Cell,
    pub open: bool,
}

/// What an agent's action actually did this step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionEffect {
    Moved,
    Turned,
    PickedUp,
    Dropped,
    OpenedDoor,
    /// The action had no effect (blocked move, nothing to pick up, ...).
    NoOp,
    /// The episode ended earlier in this step, before the agent's turn.
    Skipped,
}

/// Ground truth of one episode in progress.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub width: usize,
    pub height: usize,
    pub timestep: usize,
    pub agents: Vec<AgentPose>,
    pub key_holder: Option<usize>,
    pub key_cell: Option<Cell>,
    /// `doors[i]` belongs to agent `i`.
    pub doors: Vec<Door>,
    pub seed: u64,
    pub episode_index: u64,
    pub turn_order: Vec<usize>,
    pub done: bool,
    /// Step index at which each agent opened its door.
    pub door_opened_at: Vec<Option<usize>>,
    pub(crate) oracle_paid: Vec<bool>,
    pub(crate) pending_noise: Vec<bool>,
    pub(crate) rng: ChaCha8Rng,
}

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub done: bool,
    pub events: Vec<RewardEvent>,
    pub effects: Vec<ActionEffect>,
}

impl EnvState {
    /// Starts episode `episode_index` of the environment seeded with `seed`.
    pub fn reset(config: &EnvConfig, seed: u64, episode_index: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let n = config.num_agents;
        let needed = 2 * n + 1;
        // One cell beyond the objects must stay free, otherwise nobody can move or drop.
        if config.cell_count() < needed + 1 {
            return Err(EnvError::PlacementInfeasible {
                width: config.grid_width,
                height: config.grid_height,
                needed,
            });
        }

        let mut rng = seed::rng_from(seed::episode_seed(seed, episode_index));
        let mut cells: Vec<usize> = (0..config.cell_count()).collect();
        for i in 0..needed {
            let j = rng.gen_range(i..cells.len());
            cells.swap(i, j);
        }
        let to_cell = |idx: usize| Cell::new((idx % config.grid_width) as i32, (idx / config.grid_width) as i32);

        let key_cell = to_cell(cells[0]);
        let doors = (0..n)
            .map(|owner| Door {
                owner,
                cell: to_cell(cells[1 + owner]),
                open: false,
            })
            .collect();
        let agents = (0..n)
            .map(|i| AgentPose {
                pos: to_cell(cells[1 + n + i]),
                heading: Heading::from_index(rng.gen_range(0..4)),
            })
            .collect();
        let turn_order = turn_order_for_episode(config, episode_index, &mut rng);

        Ok(EnvState {
            width: config.grid_width,
            height: config.grid_height,
            timestep: 0,
            agents,
            key_holder: None,
            key_cell: Some(key_cell),
            doors,
            seed,
            episode_index,
            turn_order,
            done: false,
            door_opened_at: vec![None; n],
            oracle_paid: vec![false; n],
            pending_noise: vec![false; n],
            rng,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as usize) < self.width && (cell.y as usize) < self.height
    }

    pub fn agent_at(&self, cell: Cell) -> Option<usize> {
        self.agents.iter().position(|a| a.pos == cell)
    }

    /// Owner of the closed door at `cell`. Open doors are gone from the grid.
    pub fn closed_door_at(&self, cell: Cell) -> Option<usize> {
        self.doors.iter().find(|d| !d.open && d.cell == cell).map(|d| d.owner)
    }

    /// In bounds and holding no agent, closed door or key.
    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell)
            && self.agent_at(cell).is_none()
            && self.closed_door_at(cell).is_none()
            && self.key_cell != Some(cell)
    }

    pub fn front_of(&self, agent: usize) -> Cell {
        let pose = self.agents[agent];
        pose.pos.step(pose.heading)
    }

    pub fn holds_key(&self, agent: usize) -> bool {
        self.key_holder == Some(agent)
    }

    pub fn all_doors_open(&self) -> bool {
        self.doors.iter().all(|d| d.open)
    }

    /// Advances the episode by one step. Agents act sequentially in
    /// `turn_order`; conflicts go to whoever acts first.
    pub fn step(&mut self, config: &EnvConfig, actions: &[Action]) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterTerminal);
        }
        let n = self.num_agents();
        if actions.len() != n {
            return Err(EnvError::ActionCount {
                expected: n,
                got: actions.len(),
            });
        }

        let t = self.timestep;
        let mut events = Vec::new();
        let mut effects = vec![ActionEffect::Skipped; n];
        let order = self.turn_order.clone();
        for agent in order {
            let effect = self.apply_action(agent, actions[agent]);
            effects[agent] = effect;
            if effect == ActionEffect::OpenedDoor {
                self.door_opened_at[agent] = Some(t);
                events.push(RewardEvent {
                    agent,
                    kind: RewardEventKind::OwnDoorOpened,
                    amount: config.reward_individual,
                    timestep: t,
                });
                if self.all_doors_open() {
                    let collective = config.collective_reward();
                    events.extend((0..n).map(|i| RewardEvent {
                        agent: i,
                        kind: RewardEventKind::AllDoorsOpened,
                        amount: collective,
                        timestep: t,
                    }));
                    self.done = true;
                    break;
                }
            }
        }

        let rewards = apply_reward_variant(&mut events, &effects, self, config);
        self.timestep += 1;
        if self.timestep >= config.max_steps {
            self.done = true;
        }
        Ok(StepOutcome {
            rewards,
            done: self.done,
            events,
            effects,
        })
    }

    fn apply_action(&mut self, agent: usize, action: Action) -> ActionEffect {
        let front = self.front_of(agent);
        match action {
            Action::TurnLeft => {
                self.agents[agent].heading = self.agents[agent].heading.left();
                ActionEffect::Turned
            }
            Action::TurnRight => {
                self.agents[agent].heading = self.agents[agent].heading.right();
                ActionEffect::Turned
            }
            Action::Forward => {
                if self.is_free(front) {
                    self.agents[agent].pos = front;
                    ActionEffect::Moved
                } else {
                    ActionEffect::NoOp
                }
            }
            Action::Pickup => {
                if self.key_cell == Some(front) {
                    self.key_cell = None;
                    self.key_holder = Some(agent);
                    ActionEffect::PickedUp
                } else {
                    ActionEffect::NoOp
                }
            }
            Action::Drop => {
                if self.holds_key(agent) && self.is_free(front) {
                    self.key_holder = None;
                    self.key_cell = Some(front);
                    ActionEffect::Dropped
                } else {
                    ActionEffect::NoOp
                }
            }
            Action::Open => {
                if self.holds_key(agent) && self.closed_door_at(front) == Some(agent) {
                    self.doors[agent].open = true;
                    ActionEffect::OpenedDoor
                } else {
                    ActionEffect::NoOp
                }
            }
        }
    }

    /// Checks the structural invariants of a reachable state.
    pub fn check_invariants(&self, config: &EnvConfig) -> Result<(), String> {
        if self.key_holder.is_some() == self.key_cell.is_some() {
            return Err(format!(
                "key must be either held or on the grid (holder {:?}, cell {:?})",
                self.key_holder, self.key_cell
            ));
        }
        if let Some(h) = self.key_holder {
            if h >= self.num_agents() {
                return Err(format!("key held by unknown agent {h}"));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !self.in_bounds(a.pos) {
                return Err(format!("agent {i} out of bounds at {:?}", a.pos));
            }
            if self.agents[..i].iter().any(|b| b.pos == a.pos) {
                return Err(format!("two agents share cell {:?}", a.pos));
            }
            if self.closed_door_at(a.pos).is_some() {
                return Err(format!("agent {i} stands on a closed door"));
            }
            if self.key_cell == Some(a.pos) {
                return Err(format!("agent {i} stands on the key"));
            }
        }
        if let Some(k) = self.key_cell {
            if !self.in_bounds(k) || self.closed_door_at(k).is_some() {
                return Err(format!("key at invalid cell {k:?}"));
            }
        }
        for (i, d) in self.doors.iter().enumerate() {
            if d.owner != i {
                return Err(format!("door {i} has owner {}", d.owner));
            }
            if d.open != self.door_opened_at[i].is_some() {
                return Err(format!("door {i} open flag disagrees with its opening step"));
            }
        }
        if self.timestep > config.max_steps {
            return Err(format!("timestep {} beyond limit", self.timestep));
        }
        Ok(())
    }
}

/// Legal-action mask: drop and open are pruned while the agent has no key.
pub fn legal_action_mask(state: &EnvState, agent: usize) -> Result<[bool; Action::COUNT], EnvError> {
    if agent >= state.num_agents() {
        return Err(EnvError::AgentOutOfRange {
            agent,
            num_agents: state.num_agents(),
        });
    }
    let holding = state.holds_key(agent);
    Ok([true, true, true, true, holding, holding])
}

/// Agent permutation used for the whole of episode `episode_index`.
///
/// Alternating order has agent 0 first on even episodes and the order
/// rotated by one on odd episodes.
pub fn turn_order_for_episode(config: &EnvConfig, episode_index: u64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = config.num_agents;
    let mut order: Vec<usize> = (0..n).collect();
    match config.turn_order {
        TurnOrder::Fixed => {}
        TurnOrder::Alternating => {
            if episode_index % 2 == 1 {
                order.rotate_left(1);
            }
        }
        TurnOrder::RandomEachEpisode => order.shuffle(rng),
    }
    order
}

/// A stateful environment: configuration, current episode, and each agent's
/// previous action (for the last-action observation segment).
#[derive(Clone, Debug)]
pub struct ManitokanEnv {
    config: EnvConfig,
    state: EnvState,
    last_actions: Vec<Option<Action>>,
}

impl ManitokanEnv {
    pub fn new(config: EnvConfig, seed: u64, episode_index: u64) -> Result<Self, EnvError> {
        let state = EnvState::reset(&config, seed, episode_index)?;
        let n = config.num_agents;
        Ok(ManitokanEnv {
            config,
            state,
            last_actions: vec![None; n],
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn reset(&mut self, seed: u64, episode_index: u64) -> Result<Vec<Observation>, EnvError> {
        self.state = EnvState::reset(&self.config, seed, episode_index)?;
        self.last_actions.iter_mut().for_each(|a| *a = None);
        Ok(self.observations())
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.config.num_agents)
            .map(|i| encode_observation(&self.state, i, &self.config, self.last_actions[i]))
            .collect()
    }

    pub fn legal_mask(&self, agent: usize) -> [bool; Action::COUNT] {
        legal_action_mask(&self.state, agent).expect("agent index within configured range")
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<(Vec<Observation>, StepOutcome), EnvError> {
        let outcome = self.state.step(&self.config, actions)?;
        for (slot, &a) in self.last_actions.iter_mut().zip(actions) {
            *slot = Some(a);
        }
        Ok((self.observations(), outcome))
    }
}
