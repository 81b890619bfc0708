//! The Manitokan grid world.
//!
//! N agents share a single key. Each agent owns one door and earns an
//! individual reward when it opens that door; when the last door opens every
//! agent additionally receives the collective reward and the episode ends.
//! Because there is only one key, the first agent to open its door has to
//! drop the key for the others. That drop is never observed by the
//! recipients.

mod config;
mod observation;
mod reward;
mod state;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{EnvConfig, ObsFlag, ObsFlags, RewardVariant, TurnOrder};
pub use observation::{
    encode_observation, obs_len, Observation, CELL_CHANNELS, EGOCENTRIC_LEN, STATUS_LEN, VIEW_CELLS,
};
pub use reward::{apply_reward_variant, RewardEvent, RewardEventKind};
pub use state::{
    legal_action_mask, turn_order_for_episode, ActionEffect, AgentPose, Door, EnvState, ManitokanEnv, StepOutcome,
};
pub use trace::{replay_trace, ReplayReport, TraceHeader, TraceRecord, TraceRecorder, TransitionRecord};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "cannot place {needed} objects on a {width}x{height} grid (need {needed} distinct cells plus one free cell)"
    )]
    PlacementInfeasible { width: usize, height: usize, needed: usize },
    #[error("step called on a terminated episode")]
    StepAfterTerminal,
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("agent index {agent} out of range for {num_agents} agents")]
    AgentOutOfRange { agent: usize, num_agents: usize },
}

/// The six agent actions with their fixed network-output ordinals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Action {
    Forward = 0,
    TurnLeft = 1,
    TurnRight = 2,
    Pickup = 3,
    Drop = 4,
    Open = 5,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::Forward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Pickup,
        Action::Drop,
        Action::Open,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Heading {
        Heading::ALL[index % 4]
    }

    pub fn left(self) -> Heading {
        Heading::from_index(self.index() + 3)
    }

    pub fn right(self) -> Heading {
        Heading::from_index(self.index() + 1)
    }

    /// Unit step in grid coordinates; y grows southwards.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }
}

/// Grid coordinates. Signed so that neighbours of border cells can be formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Cell {
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn step(self, heading: Heading) -> Cell {
        let (dx, dy) = heading.delta();
        self.offset(dx, dy)
    }

    pub fn distance(self, other: Cell) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}
