use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::state::{ActionEffect, EnvState};
use super::{EnvConfig, RewardVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardEventKind {
    OwnDoorOpened,
    AllDoorsOpened,
    OracleFirstDrop,
    PunishmentTick,
    InjectionNoise,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub agent: usize,
    pub kind: RewardEventKind,
    pub amount: f64,
    /// Index of the step that produced the event (0-based).
    pub timestep: usize,
}

impl RewardEvent {
    pub fn is_standard(&self) -> bool {
        matches!(
            self.kind,
            RewardEventKind::OwnDoorOpened | RewardEventKind::AllDoorsOpened
        )
    }
}

/// Adds the variant-specific events to the standard events of one step and
/// returns each agent's reward for the step.
///
/// `state` is the post-action state of the step (timestep not yet advanced).
pub fn apply_reward_variant(
    events: &mut Vec<RewardEvent>,
    effects: &[ActionEffect],
    state: &mut EnvState,
    config: &EnvConfig,
) -> Vec<f64> {
    let n = state.num_agents();
    let t = state.timestep;
    match config.reward_variant {
        RewardVariant::Standard => {}
        RewardVariant::Oracle => {
            for agent in 0..n {
                let door_was_open = state.door_opened_at[agent].is_some_and(|s| s < t);
                if effects[agent] == ActionEffect::Dropped && door_was_open && !state.oracle_paid[agent] {
                    state.oracle_paid[agent] = true;
                    events.push(RewardEvent {
                        agent,
                        kind: RewardEventKind::OracleFirstDrop,
                        amount: 1.0,
                        timestep: t,
                    });
                }
            }
        }
        RewardVariant::Punishment => {
            for agent in 0..n {
                let door_was_open = state.door_opened_at[agent].is_some_and(|s| s < t);
                if door_was_open && state.holds_key(agent) {
                    events.push(RewardEvent {
                        agent,
                        kind: RewardEventKind::PunishmentTick,
                        amount: -config.punishment_per_step,
                        timestep: t,
                    });
                }
            }
        }
        RewardVariant::Injection => {
            let bound = config.injection_scale * config.injection_decay.powf(state.episode_index as f64);
            let mut noisy = std::mem::replace(&mut state.pending_noise, vec![false; n]);
            for e in events.iter().filter(|e| e.is_standard() && e.amount != 0.0) {
                noisy[e.agent] = true;
                state.pending_noise[e.agent] = true;
            }
            if bound > 0.0 {
                let normal = Normal::new(0.0, bound).expect("finite positive standard deviation");
                for (agent, _) in noisy.iter().enumerate().filter(|(_, &on)| on) {
                    let amount = normal.sample(&mut state.rng).clamp(-bound, bound);
                    events.push(RewardEvent {
                        agent,
                        kind: RewardEventKind::InjectionNoise,
                        amount,
                        timestep: t,
                    });
                }
            }
        }
        RewardVariant::IndividualOnly => {
            for e in events.iter_mut().filter(|e| e.kind == RewardEventKind::AllDoorsOpened) {
                e.amount = 0.0;
            }
        }
        RewardVariant::CollectiveOnly => {
            for e in events.iter_mut().filter(|e| e.kind == RewardEventKind::OwnDoorOpened) {
                e.amount = 0.0;
            }
        }
    }

    let mut rewards = vec![0.0; n];
    for e in events.iter() {
        rewards[e.agent] += e.amount;
    }
    rewards
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, AgentPose, Cell, Door, Heading};
    use Action::*;

    fn config(variant: RewardVariant) -> EnvConfig {
        EnvConfig {
            reward_variant: variant,
            ..EnvConfig::default()
        }
    }

    /// Agent 0 holds the key facing its own door at (1,2); agent 1 idles in a corner.
    fn ready_to_open(cfg: &EnvConfig) -> EnvState {
        let mut s = EnvState::reset(cfg, 0, 0).unwrap();
        s.agents = vec![
            AgentPose {
                pos: Cell::new(1, 1),
                heading: Heading::South,
            },
            AgentPose {
                pos: Cell::new(3, 0),
                heading: Heading::North,
            },
        ];
        s.key_cell = None;
        s.key_holder = Some(0);
        s.doors = vec![
            Door {
                owner: 0,
                cell: Cell::new(1, 2),
                open: false,
            },
            Door {
                owner: 1,
                cell: Cell::new(3, 3),
                open: false,
            },
        ];
        s.turn_order = vec![0, 1];
        s
    }

    fn run(cfg: &EnvConfig, s: &mut EnvState, script: &[[Action; 2]]) -> Vec<f64> {
        let mut totals = vec![0.0; 2];
        for acts in script {
            let out = s.step(cfg, acts).unwrap();
            for (t, r) in totals.iter_mut().zip(out.rewards) {
                *t += r;
            }
        }
        totals
    }

    #[test]
    fn oracle_pays_first_drop_after_opening_once() {
        let cfg = config(RewardVariant::Oracle);
        let mut s = ready_to_open(&cfg);
        // open, turn north, drop, pick up again, drop again
        let totals = run(
            &cfg,
            &mut s,
            &[
                [Open, TurnLeft],
                [TurnLeft, TurnLeft],
                [TurnLeft, TurnLeft],
                [Drop, TurnLeft],
                [Pickup, TurnLeft],
                [Drop, TurnLeft],
            ],
        );
        assert_eq!(totals, vec![0.5 + 1.0, 0.0]);
        assert!(s.oracle_paid[0]);
    }

    #[test]
    fn oracle_ignores_drops_before_opening() {
        let cfg = config(RewardVariant::Oracle);
        let mut s = ready_to_open(&cfg);
        s.agents[0].heading = Heading::North;
        let totals = run(&cfg, &mut s, &[[Drop, TurnLeft]]);
        assert_eq!(totals, vec![0.0, 0.0]);
    }

    #[test]
    fn punishment_charges_each_step_key_is_kept() {
        let cfg = config(RewardVariant::Punishment);
        let mut s = ready_to_open(&cfg);
        let mut script = vec![[Open, TurnLeft]];
        script.extend(std::iter::repeat_n([TurnLeft, TurnLeft], 4));
        let totals = run(&cfg, &mut s, &script);
        assert_eq!(totals[0], 0.5 - 2.0);
        // dropping stops the charge (facing north after 4 left turns is south again)
        s.agents[0].heading = Heading::North;
        let totals = run(&cfg, &mut s, &[[Drop, TurnLeft], [TurnLeft, TurnLeft]]);
        assert_eq!(totals[0], 0.0);
    }

    #[test]
    fn individual_only_removes_collective_reward() {
        let cfg = config(RewardVariant::IndividualOnly);
        let mut s = ready_to_open(&cfg);
        s.doors[1].open = true;
        s.door_opened_at[1] = Some(0);
        let out = s.step(&cfg, &[Open, TurnLeft]).unwrap();
        assert!(out.done);
        assert_eq!(out.rewards, vec![0.5, 0.0]);
        assert!(out
            .events
            .iter()
            .any(|e| e.kind == RewardEventKind::AllDoorsOpened && e.amount == 0.0));
    }

    #[test]
    fn collective_only_removes_individual_reward() {
        let cfg = config(RewardVariant::CollectiveOnly);
        let mut s = ready_to_open(&cfg);
        s.doors[1].open = true;
        s.door_opened_at[1] = Some(0);
        let out = s.step(&cfg, &[Open, TurnLeft]).unwrap();
        assert_eq!(out.rewards, vec![1.0, 1.0]);
    }

    #[test]
    fn injection_noise_is_bounded_and_decays() {
        let mut cfg = config(RewardVariant::Injection);
        cfg.injection_scale = 0.2;
        cfg.injection_decay = 0.5;
        for episode in [0_u64, 3] {
            let mut s = ready_to_open(&cfg);
            s.episode_index = episode;
            let bound = 0.2 * 0.5_f64.powi(episode as i32);
            let out = s.step(&cfg, &[Open, TurnLeft]).unwrap();
            let noise: Vec<_> = out
                .events
                .iter()
                .filter(|e| e.kind == RewardEventKind::InjectionNoise)
                .collect();
            assert_eq!(noise.len(), 1);
            assert_eq!(noise[0].agent, 0);
            assert!(noise[0].amount.abs() <= bound);
            // one more noise event on the following step, then nothing
            let out = s.step(&cfg, &[TurnLeft, TurnLeft]).unwrap();
            assert_eq!(out.events.len(), 1);
            assert!(out.events[0].amount.abs() <= bound);
            let out = s.step(&cfg, &[TurnLeft, TurnLeft]).unwrap();
            assert!(out.events.is_empty());
        }
    }

    #[test]
    fn standard_passes_through() {
        let cfg = config(RewardVariant::Standard);
        let mut s = ready_to_open(&cfg);
        let out = s.step(&cfg, &[Open, TurnLeft]).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.rewards, vec![0.5, 0.0]);
    }
}
