//! Egocentric observation encoding.
//!
//! The view is the 3x3 block centred on the agent, rotated so the agent's
//! heading points "up" (row 0 is the row ahead, column 0 is to the left).
//! Each cell carries three channels:
//!
//! | channel | meaning                                                      |
//! |---------|--------------------------------------------------------------|
//! | 0       | class / 4 with empty=0, out-of-bounds=1, key=2, door=3, agent=4 |
//! | 1       | closed door: 1.0 own door, 0.5 another agent's door; else 0  |
//! | 2       | occupant heading relative to the viewer, 0.25..1.0; else 0   |
//!
//! Optional segments follow: `[own door open, holding key]` and a one-hot
//! of the agent's previous action (all zero on the first step). Nothing in
//! the encoding reveals whether another agent carries the key.

use super::{Action, Cell, EnvConfig, EnvState, ObsFlags};

pub const VIEW_CELLS: usize = 9;
pub const CELL_CHANNELS: usize = 3;
pub const EGOCENTRIC_LEN: usize = VIEW_CELLS * CELL_CHANNELS;
pub const STATUS_LEN: usize = 2;

const CLASS_EMPTY: f64 = 0.0;
const CLASS_OUT_OF_BOUNDS: f64 = 1.0;
const CLASS_KEY: f64 = 2.0;
const CLASS_DOOR: f64 = 3.0;
const CLASS_AGENT: f64 = 4.0;
const CLASS_SCALE: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn egocentric(&self) -> &[f64] {
        &self.features[..EGOCENTRIC_LEN]
    }
}

pub fn obs_len(flags: ObsFlags) -> usize {
    EGOCENTRIC_LEN
        + if flags.door_key_status { STATUS_LEN } else { 0 }
        + if flags.last_action { Action::COUNT } else { 0 }
}

/// World cell shown at view position (`row`, `col`).
fn view_cell(state: &EnvState, agent: usize, row: usize, col: usize) -> Cell {
    let pose = state.agents[agent];
    let (fx, fy) = pose.heading.delta();
    let (rx, ry) = pose.heading.right().delta();
    let ahead = 1 - row as i32;
    let side = col as i32 - 1;
    pose.pos.offset(ahead * fx + side * rx, ahead * fy + side * ry)
}

pub fn encode_observation(
    state: &EnvState,
    agent: usize,
    config: &EnvConfig,
    last_action: Option<Action>,
) -> Observation {
    let flags = config.obs_flags;
    let mut features = Vec::with_capacity(obs_len(flags));
    let viewer_heading = state.agents[agent].heading.index();

    for row in 0..3 {
        for col in 0..3 {
            let cell = view_cell(state, agent, row, col);
            let (class, detail, heading) = if !state.in_bounds(cell) {
                (CLASS_OUT_OF_BOUNDS, 0.0, 0.0)
            } else if let Some(other) = state.agent_at(cell) {
                let rel = (state.agents[other].heading.index() + 4 - viewer_heading) % 4;
                (CLASS_AGENT, 0.0, 0.25 * (rel + 1) as f64)
            } else if let Some(owner) = state.closed_door_at(cell) {
                let detail = if owner == agent { 1.0 } else { 0.5 };
                (CLASS_DOOR, detail, 0.0)
            } else if state.key_cell == Some(cell) {
                (CLASS_KEY, 0.0, 0.0)
            } else {
                (CLASS_EMPTY, 0.0, 0.0)
            };
            features.extend_from_slice(&[class / CLASS_SCALE, detail, heading]);
        }
    }

    if flags.door_key_status {
        features.push(if state.doors[agent].open { 1.0 } else { 0.0 });
        features.push(if state.holds_key(agent) { 1.0 } else { 0.0 });
    }
    if flags.last_action {
        let mut one_hot = [0.0; Action::COUNT];
        if let Some(a) = last_action {
            one_hot[a.index()] = 1.0;
        }
        features.extend_from_slice(&one_hot);
    }
    Observation { features }
}
